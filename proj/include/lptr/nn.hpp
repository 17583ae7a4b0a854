#pragma once

#include <functional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "lptr/core/random.hpp"
#include "lptr/core/tensor.hpp"

namespace lptr::nn {

/// A named trainable tensor with its accumulated gradient.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

using ParamList = std::vector<Param*>;

/// Per-worker gradient accumulator. Each worker thread owns one buffer;
/// buffers are folded into Param::grad in worker order after the batch, so
/// results do not depend on thread timing.
class GradBuffer {
public:
    explicit GradBuffer(const ParamList& params);
    Tensor& grad(const Param& p);
    void fold_into_params();
    void zero();

private:
    std::vector<Param*> params_;
    std::vector<Tensor> grads_;
    std::unordered_map<const Param*, size_t> index_;
};

/// Runs fn(sample_index, worker_index) over [0, n) split into contiguous
/// chunks, one chunk per worker. Within a chunk execution is sequential, so
/// any per-worker accumulation is deterministic for a fixed worker count.
void parallel_samples(int n, int workers, const std::function<void(int, int)>& fn);

int default_workers();

// --- layers ----------------------------------------------------------------

/// 2D convolution over (C, H, W) tensors, zero padding, arbitrary stride.
class Conv2d {
public:
    Conv2d(std::string name, int in_c, int out_c, int kh, int kw, int sh = 1,
           int sw = 1, int ph = 0, int pw = 0);

    Tensor forward(const Tensor& x) const;
    /// Accumulates weight/bias gradients into gb; returns dL/dx when need_gx.
    Tensor backward(const Tensor& x, const Tensor& gy, GradBuffer& gb,
                    bool need_gx) const;

    void init(Rng& rng);
    void collect(ParamList& out);

    int out_h(int in_h) const { return (in_h + 2 * ph_ - kh_) / sh_ + 1; }
    int out_w(int in_w) const { return (in_w + 2 * pw_ - kw_) / sw_ + 1; }

    Param w;  // (out_c, in_c, kh, kw)
    Param b;  // (out_c)

private:
    int in_c_, out_c_, kh_, kw_, sh_, sw_, ph_, pw_;

    void im2col(const Tensor& x, int oh, int ow, std::vector<double>& cols) const;
    void col2im(const std::vector<double>& cols, int in_h, int in_w, int oh, int ow,
                Tensor& gx) const;
};

/// Fully connected layer over flat vectors.
class Dense {
public:
    Dense(std::string name, int in_dim, int out_dim);

    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& x, const Tensor& gy, GradBuffer& gb,
                    bool need_gx) const;

    void init(Rng& rng);
    void init_zero();
    void collect(ParamList& out);

    Param w;  // (out_dim, in_dim)
    Param b;  // (out_dim)

private:
    int in_dim_, out_dim_;
};

// activations (elementwise); backward takes the forward *output*
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& y, const Tensor& gy);
Tensor tanh_map(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& gy);
double sigmoid(double x);

/// Adaptive average pooling to a fixed (out_h, out_w) over (C, H, W).
Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w);
Tensor adaptive_avg_pool_backward(const Tensor& x, const Tensor& gy);

/// Scales the whole tensor so its mean squared activation is 1:
/// y = x / sqrt(mean(x^2) + eps).
Tensor energy_normalize(const Tensor& x, double eps = 1e-8);
Tensor energy_normalize_backward(const Tensor& x, const Tensor& gy,
                                 double eps = 1e-8);
double mean_square(const Tensor& x);

/// Column-wise softmax of a (K, T) logit matrix: each frame t gets a
/// distribution over the K classes.
Tensor softmax_columns(const Tensor& logits);

// --- optimizer ---------------------------------------------------------------

class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void attach(const ParamList& params);
    /// Applies one update from Param::grad; parameters whose name is in
    /// `frozen` are skipped entirely (value, moments and all).
    void step(const ParamList& params, const std::set<std::string>& frozen = {});
    void zero_grad(const ParamList& params);

    double lr;
    double beta1, beta2, eps;
    long t = 0;

    // per-param moments, keyed by name (survives re-attach in stage changes)
    std::unordered_map<std::string, Tensor> m, v;
};

}  // namespace lptr::nn
