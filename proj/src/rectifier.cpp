#include "lptr/rectifier.hpp"

#include <cmath>

#include "lptr/core/error.hpp"
#include "lptr/core/image.hpp"

namespace lptr::ptr {

using geometry::Point2;
using geometry::Quad;

geometry::Quad upper_quad(const Hexad& h) {
    return Quad{{h.vertices[0], h.vertices[1], h.vertices[3], h.vertices[2]}};
}

geometry::Quad lower_quad(const Hexad& h) {
    return Quad{{h.vertices[2], h.vertices[3], h.vertices[5], h.vertices[4]}};
}

Quad vertices_from_offsets_single(std::span<const double> offsets) {
    if (offsets.size() != 8) throw ShapeMismatch("expected 8 offsets");
    static const Point2 anchors[4] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    Quad q;
    for (int i = 0; i < 4; ++i)
        q.corners[i] = Point2{anchors[i].x + offsets[2 * i],
                              anchors[i].y + offsets[2 * i + 1]};
    if (!geometry::is_strictly_convex(q))
        throw DegenerateQuad("offset vertices form a non-convex quad");
    return q;
}

Hexad vertices_from_offsets_double(std::span<const double> offsets) {
    if (offsets.size() != 12) throw ShapeMismatch("expected 12 offsets");
    static const Point2 anchors[6] = {{0, 0}, {1, 0}, {0, 0.5},
                                      {1, 0.5}, {0, 1}, {1, 1}};
    Hexad h;
    for (int i = 0; i < 6; ++i)
        h.vertices[i] = Point2{anchors[i].x + offsets[2 * i],
                               anchors[i].y + offsets[2 * i + 1]};
    if (!geometry::is_strictly_convex(upper_quad(h)))
        throw DegenerateQuad("upper sub-quad is not convex");
    if (!geometry::is_strictly_convex(lower_quad(h)))
        throw DegenerateQuad("lower sub-quad is not convex");
    return h;
}

int offset_count(RectifierMode mode) {
    switch (mode) {
        case RectifierMode::single_line: return 8;
        case RectifierMode::double_line: return 12;
        case RectifierMode::affine: return 6;
    }
    return 8;
}

Rectifier::Rectifier(RectifierConfig cfg_)
    : cfg(cfg_),
      c1("rectifier.c1", 3, 16, 3, 3, 2, 2, 1, 1),
      c2("rectifier.c2", 16, 32, 3, 3, 2, 2, 1, 1),
      c3("rectifier.c3", 32, 64, 3, 3, 2, 2, 1, 1),
      c4("rectifier.c4", 64, 128, 3, 3, 2, 2, 1, 1),
      f1("rectifier.f1", 128 * 1 * 4, 256),
      f2("rectifier.f2", 256, 64),
      f3("rectifier.f3", 64, offset_count(cfg_.mode)) {}

void Rectifier::init(uint64_t seed) {
    Rng rng(derive_seed(seed, 0x505452));
    c1.init(rng);
    c2.init(rng);
    c3.init(rng);
    c4.init(rng);
    f1.init(rng);
    f2.init(rng);
    f3.init_zero();  // identity warp at the start of training
}

nn::ParamList Rectifier::params() {
    nn::ParamList out;
    c1.collect(out);
    c2.collect(out);
    c3.collect(out);
    c4.collect(out);
    f1.collect(out);
    f2.collect(out);
    f3.collect(out);
    return out;
}

long Rectifier::param_count() {
    long n = 0;
    for (const nn::Param* p : params()) n += p->value.numel();
    return n;
}

Rectifier::Trace Rectifier::forward_trace(const Tensor& image) const {
    if (image.dim(0) != 3 || image.dim(1) != cfg.in_h || image.dim(2) != cfg.in_w)
        throw ShapeMismatch("rectifier expects (3, " + std::to_string(cfg.in_h) +
                            ", " + std::to_string(cfg.in_w) + ") input");
    Trace tr;
    tr.input = image;
    tr.a1 = nn::relu(c1.forward(image));
    tr.a2 = nn::relu(c2.forward(tr.a1));
    tr.a3 = nn::relu(c3.forward(tr.a2));
    tr.a4 = nn::relu(c4.forward(tr.a3));
    tr.pooled = nn::adaptive_avg_pool(tr.a4, 1, 4);
    Tensor flat = tr.pooled;
    flat.shape = {static_cast<int>(flat.numel())};
    tr.h1 = nn::relu(f1.forward(flat));
    tr.h2 = nn::relu(f2.forward(tr.h1));
    Tensor raw = f3.forward(tr.h2);
    tr.squashed = nn::tanh_map(raw);
    tr.offsets.resize(static_cast<size_t>(tr.squashed.numel()));
    for (long i = 0; i < tr.squashed.numel(); ++i)
        tr.offsets[static_cast<size_t>(i)] = 0.5 * tr.squashed.data[i];
    return tr;
}

std::vector<double> Rectifier::estimate_offsets(const Tensor& image) const {
    return forward_trace(image).offsets;
}

void Rectifier::backward(const Trace& tr, std::span<const double> grad_offsets,
                         nn::GradBuffer& gb) const {
    Tensor graw(tr.squashed.shape);
    for (long i = 0; i < graw.numel(); ++i)
        graw.data[i] = 0.5 * grad_offsets[static_cast<size_t>(i)];
    graw = nn::tanh_backward(tr.squashed, graw);
    Tensor gh2 = f3.backward(tr.h2, graw, gb, true);
    gh2 = nn::relu_backward(tr.h2, gh2);
    Tensor gh1 = f2.backward(tr.h1, gh2, gb, true);
    gh1 = nn::relu_backward(tr.h1, gh1);
    Tensor flat = tr.pooled;
    flat.shape = {static_cast<int>(flat.numel())};
    Tensor gflat = f1.backward(flat, gh1, gb, true);
    gflat.shape = tr.pooled.shape;
    Tensor ga4 = nn::adaptive_avg_pool_backward(tr.a4, gflat);
    ga4 = nn::relu_backward(tr.a4, ga4);
    Tensor ga3 = c4.backward(tr.a3, ga4, gb, true);
    ga3 = nn::relu_backward(tr.a3, ga3);
    Tensor ga2 = c3.backward(tr.a2, ga3, gb, true);
    ga2 = nn::relu_backward(tr.a2, ga2);
    Tensor ga1 = c2.backward(tr.a1, ga2, gb, true);
    ga1 = nn::relu_backward(tr.a1, ga1);
    c1.backward(tr.input, ga1, gb, false);
}

namespace {

Tensor regressor_view(const Rectifier& net, const Tensor& image) {
    return resize_bilinear(image, net.cfg.in_h, net.cfg.in_w);
}

}  // namespace

RectifyResult rectify_single(const Rectifier& net, const Tensor& image) {
    if (net.cfg.mode != RectifierMode::single_line)
        throw ConfigError("rectifier is not in single-line mode");
    RectifyResult res;
    res.offsets = net.estimate_offsets(regressor_view(net, image));
    try {
        res.quad = vertices_from_offsets_single(res.offsets);
        geometry::Homography h =
            geometry::solve_homography(res.quad, geometry::unit_square());
        res.image = geometry::warp(image, h, net.cfg.out_w, net.cfg.out_h);
    } catch (const DegenerateQuad&) {
        res.fallback_identity = true;
    } catch (const SingularSystem&) {
        res.fallback_identity = true;
    }
    if (res.fallback_identity) {
        res.quad = geometry::unit_square();
        res.image = geometry::warp(image, geometry::Homography::identity(),
                                   net.cfg.out_w, net.cfg.out_h);
    }
    return res;
}

RectifyResult rectify_double(const Rectifier& net, const Tensor& image) {
    if (net.cfg.mode != RectifierMode::double_line)
        throw ConfigError("rectifier is not in double-line mode");
    RectifyResult res;
    res.offsets = net.estimate_offsets(regressor_view(net, image));

    bool valid = true;
    try {
        res.hexad = vertices_from_offsets_double(res.offsets);
    } catch (const DegenerateQuad&) {
        valid = false;
    }
    if (!valid) {
        res.fallback_identity = true;
        std::vector<double> zero(12, 0.0);
        res.hexad = vertices_from_offsets_double(zero);
    }
    auto warp_part = [&](const geometry::Quad& q, int w) {
        geometry::Homography h = geometry::solve_homography(q, geometry::unit_square());
        return geometry::warp(image, h, w, net.cfg.out_h);
    };
    Tensor up, lo;
    try {
        up = warp_part(upper_quad(res.hexad), net.cfg.upper_w);
        lo = warp_part(lower_quad(res.hexad), net.cfg.lower_w);
    } catch (const SingularSystem&) {
        res.fallback_identity = true;
        std::vector<double> zero(12, 0.0);
        res.hexad = vertices_from_offsets_double(zero);
        up = warp_part(upper_quad(res.hexad), net.cfg.upper_w);
        lo = warp_part(lower_quad(res.hexad), net.cfg.lower_w);
    }
    res.image = hconcat(up, lo);
    return res;
}

Tensor affine_stn_baseline(const std::array<double, 6>& params, const Tensor& image,
                           int out_h, int out_w) {
    geometry::Homography h;
    for (int i = 0; i < 6; ++i) h.theta[i] = params[i];
    h.theta[6] = 0.0;
    h.theta[7] = 0.0;
    return geometry::warp(image, h, out_w, out_h);
}

std::array<double, 6> affine_from_deltas(std::span<const double> deltas) {
    if (deltas.size() != 6) throw ShapeMismatch("expected 6 affine deltas");
    std::array<double, 6> p{1, 0, 0, 0, 1, 0};
    for (int i = 0; i < 6; ++i) p[i] += deltas[i];
    return p;
}

}  // namespace lptr::ptr
