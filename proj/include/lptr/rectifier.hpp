#pragma once

#include <array>
#include <span>

#include "lptr/geometry.hpp"
#include "lptr/nn.hpp"

namespace lptr::ptr {

/// Six plate vertices: upper-left, upper-right, shared-left, shared-right,
/// lower-left, lower-right. The shared pair belongs to both character rows.
struct Hexad {
    std::array<geometry::Point2, 6> vertices;
};

geometry::Quad upper_quad(const Hexad& h);
geometry::Quad lower_quad(const Hexad& h);

/// Offsets -> vertices. Anchors are the image corners (single line) or the
/// corners plus the mid-height edge endpoints (double line). Throws
/// DegenerateQuad when a resulting quad is not strictly convex.
geometry::Quad vertices_from_offsets_single(std::span<const double> offsets);
Hexad vertices_from_offsets_double(std::span<const double> offsets);

enum class RectifierMode { single_line, double_line, affine };

int offset_count(RectifierMode mode);  // 8 / 12 / 6

struct RectifierConfig {
    RectifierMode mode = RectifierMode::single_line;
    int in_h = 64;   // regressor input size
    int in_w = 128;
    int out_h = 24;  // rectified output size
    int out_w = 94;
    int upper_w = 27;  // double-line segment widths (upper_w + lower_w = out_w)
    int lower_w = 67;
};

/// Vertex-offset regressor: four stride-2 convolutions, average pooling and
/// three fully connected layers; the last layer is zero-initialized and the
/// output squashed to [-0.5, 0.5], so a fresh network predicts zero offsets
/// (an exact identity warp).
class Rectifier {
public:
    explicit Rectifier(RectifierConfig cfg = {});

    struct Trace {
        Tensor input;
        Tensor a1, a2, a3, a4;  // post-ReLU conv activations
        Tensor pooled;          // (128, 1, 4)
        Tensor h1, h2;          // post-ReLU dense activations
        Tensor squashed;        // tanh output
        std::vector<double> offsets;
    };

    Trace forward_trace(const Tensor& image) const;
    std::vector<double> estimate_offsets(const Tensor& image) const;
    void backward(const Trace& tr, std::span<const double> grad_offsets,
                  nn::GradBuffer& gb) const;

    void init(uint64_t seed);
    nn::ParamList params();
    long param_count();

    RectifierConfig cfg;
    nn::Conv2d c1, c2, c3, c4;
    nn::Dense f1, f2, f3;
};

struct RectifyResult {
    Tensor image;
    bool fallback_identity = false;  // degenerate prediction, identity warp used
    std::vector<double> offsets;
    geometry::Quad quad;    // single-line / affine result quad (when valid)
    Hexad hexad;            // double-line vertices (when valid)
};

/// Full single-line path: offsets -> quad -> homography -> warp.
RectifyResult rectify_single(const Rectifier& net, const Tensor& image);

/// Double-line path: offsets -> hexad -> two warps -> horizontal concat.
RectifyResult rectify_double(const Rectifier& net, const Tensor& image);

/// Six-parameter affine baseline (a11, a12, t1, a21, a22, t2), mapping output
/// to input coordinates; identity is (1,0,0,0,1,0).
Tensor affine_stn_baseline(const std::array<double, 6>& params, const Tensor& image,
                           int out_h, int out_w);

/// Affine parameters from a bounded delta vector (identity + deltas), the
/// form produced by a Rectifier in affine mode.
std::array<double, 6> affine_from_deltas(std::span<const double> deltas);

}  // namespace lptr::ptr
