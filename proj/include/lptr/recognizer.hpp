#pragma once

#include <array>
#include <string>

#include "lptr/nn.hpp"

namespace lptr::aflnet {

/// Lightweight per-channel attention over (C, H, W) page stacks:
/// column-average to (C, W), per-channel 1x3 convolution (edge-replicated
/// padding, kernels not shared across channels), sigmoid, replicate across
/// the H rows, multiply into the input.
class Lpca {
public:
    Lpca(std::string name, int channels);

    struct Trace {
        Tensor input;    // (C, H, W)
        Tensor colavg;   // (C, W)
        Tensor preact;   // (C, W)
        Tensor att;      // (C, W), in (0, 1)
        Tensor output;   // (C, H, W)
    };

    Trace forward(const Tensor& pages) const;
    Tensor backward(const Trace& tr, const Tensor& gy, nn::GradBuffer& gb) const;

    /// Attention map replicated to the input shape (for inspection/tests).
    Tensor attention_map(const Tensor& pages) const;

    void init(Rng& rng);
    void collect(nn::ParamList& out);
    int channels() const { return channels_; }

    nn::Param k;  // (channels, 3)
    nn::Param b;  // (channels)

private:
    int channels_;
};

struct RecognizerConfig {
    int in_h = 24;
    int in_w = 94;
    int fuse_h = 4;
    int fuse_w = 18;
    int classes = 73;
    bool use_attention = true;  // ablation switch
};

/// Recognition network: a small convolutional backbone tapped at four depths
/// (64+128+256+73 channels), each tap pooled to fuse_h x fuse_w and
/// energy-normalized, concatenated to a 521-channel volume; a 1x1 head turns
/// the volume into one spatial evidence page per charset symbol; per-channel
/// attention re-weights the pages; column-average pooling yields per-frame
/// class logits.
class Recognizer {
public:
    explicit Recognizer(RecognizerConfig cfg = {});

    struct Trace {
        Tensor input;
        Tensor stem, t1, t2a, t2b, t3a, t3b, t3c, t4;   // post-ReLU activations
        std::array<Tensor, 4> pooled;                   // taps pooled to fuse size
        Tensor fused;                                   // (521, 4, 18)
        Tensor pages;                                   // head output (73, 4, 18)
        Lpca::Trace att;                                // valid when attention on
        Tensor pages_out;                               // after attention
        Tensor logits;                                  // (73, 18)
    };

    Trace forward(const Tensor& image) const;
    /// Backprop from dL/dlogits; accumulates parameter grads, optionally
    /// produces dL/dimage (needed when a rectifier feeds this network).
    Tensor backward(const Trace& tr, const Tensor& grad_logits, nn::GradBuffer& gb,
                    bool need_grad_image) const;

    // spec operation surface
    Tensor backbone_forward(const Tensor& image) const;  // (521, fuse_h, fuse_w)
    Tensor head_forward(const Tensor& fused) const;      // (classes, fuse_h, fuse_w)
    Tensor lp_ca(const Tensor& pages) const;
    static Tensor column_pool(const Tensor& pages);      // mean over rows
    Tensor recognize_forward(const Tensor& image) const; // (classes, fuse_w)

    void init(uint64_t seed);
    nn::ParamList params();
    long param_count();

    RecognizerConfig cfg;

    nn::Conv2d stem, b1, b2a, b2b, b3a, b3b, b3c, tap4, head;
    Lpca attention;
};

}  // namespace lptr::aflnet
