#include "lptr/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace lptr;
using namespace lptr::nn;
using lptr::testutil::fd;
using lptr::testutil::grad_rel_err;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

/// Naive convolution for cross-checking the im2col path.
Tensor conv_naive(const Tensor& x, const Tensor& w, const Tensor& b, int sh, int sw,
                  int ph, int pw) {
    const int in_c = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int out_c = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (H + 2 * ph - kh) / sh + 1, ow = (W + 2 * pw - kw) / sw + 1;
    Tensor y({out_c, oh, ow});
    for (int oc = 0; oc < out_c; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = b.data[static_cast<size_t>(oc)];
                for (int ic = 0; ic < in_c; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            int iy = oy * sh - ph + ky, ix = ox * sw - pw + kx;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            s += w.at(oc, ic, ky, kx) * x.at(ic, iy, ix);
                        }
                y.at(oc, oy, ox) = s;
            }
    return y;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

}  // namespace

TEST(Conv2d, MatchesNaiveConvolution) {
    Rng rng(7);
    Conv2d conv("t", 3, 5, 3, 3, 2, 2, 1, 1);
    conv.init(rng);
    Tensor x = random_tensor({3, 9, 12}, rng);
    Tensor got = conv.forward(x);
    Tensor want = conv_naive(x, conv.w.value, conv.b.value, 2, 2, 1, 1);
    EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

TEST(Conv2d, GradientCheck) {
    Rng rng(11);
    Conv2d conv("t", 2, 3, 3, 3, 1, 1, 1, 1);
    conv.init(rng);
    Tensor x = random_tensor({2, 5, 6}, rng);
    Tensor gy = random_tensor({3, 5, 6}, rng);
    auto loss = [&]() { return dot(conv.forward(x), gy); };

    ParamList params;
    conv.collect(params);
    GradBuffer gb(params);
    Tensor gx = conv.backward(x, gy, gb, true);

    std::vector<double> got, want;
    for (size_t i = 0; i < x.data.size(); ++i) {
        got.push_back(gx.data[i]);
        want.push_back(fd(loss, &x.data[i], 1e-6));
    }
    for (size_t i = 0; i < conv.w.value.data.size(); ++i) {
        got.push_back(gb.grad(conv.w).data[i]);
        want.push_back(fd(loss, &conv.w.value.data[i], 1e-6));
    }
    for (size_t i = 0; i < conv.b.value.data.size(); ++i) {
        got.push_back(gb.grad(conv.b).data[i]);
        want.push_back(fd(loss, &conv.b.value.data[i], 1e-6));
    }
    EXPECT_LT(grad_rel_err(got, want), 1e-6);
}

TEST(Dense, GradientCheck) {
    Rng rng(13);
    Dense fc("t", 7, 4);
    fc.init(rng);
    Tensor x = random_tensor({7}, rng);
    Tensor gy = random_tensor({4}, rng);
    auto loss = [&]() { return dot(fc.forward(x), gy); };

    ParamList params;
    fc.collect(params);
    GradBuffer gb(params);
    Tensor gx = fc.backward(x, gy, gb, true);

    std::vector<double> got, want;
    for (size_t i = 0; i < x.data.size(); ++i) {
        got.push_back(gx.data[i]);
        want.push_back(fd(loss, &x.data[i], 1e-6));
    }
    for (size_t i = 0; i < fc.w.value.data.size(); ++i) {
        got.push_back(gb.grad(fc.w).data[i]);
        want.push_back(fd(loss, &fc.w.value.data[i], 1e-6));
    }
    EXPECT_LT(grad_rel_err(got, want), 1e-6);
}

TEST(AdaptiveAvgPool, ForwardAndBackward) {
    Rng rng(17);
    Tensor x = random_tensor({2, 6, 24}, rng);
    Tensor y = adaptive_avg_pool(x, 4, 18);
    EXPECT_EQ(y.shape, (std::vector<int>{2, 4, 18}));

    // pooling an already-right-sized input is the identity
    Tensor same = adaptive_avg_pool(x, 6, 24);
    EXPECT_LT(max_abs_diff(same, x), 1e-15);

    Tensor gy = random_tensor({2, 4, 18}, rng);
    auto loss = [&]() { return dot(adaptive_avg_pool(x, 4, 18), gy); };
    Tensor gx = adaptive_avg_pool_backward(x, gy);
    std::vector<double> got, want;
    for (size_t i = 0; i < x.data.size(); ++i) {
        got.push_back(gx.data[i]);
        want.push_back(fd(loss, &x.data[i], 1e-6));
    }
    EXPECT_LT(grad_rel_err(got, want), 1e-6);
}

TEST(EnergyNormalize, UnitEnergyAndGradient) {
    Rng rng(19);
    Tensor x = random_tensor({3, 4, 5}, rng, 2.0);
    Tensor y = energy_normalize(x);
    EXPECT_NEAR(mean_square(y), 1.0, 1e-4);

    Tensor zero({3, 4, 5});
    Tensor yz = energy_normalize(zero);
    EXPECT_TRUE(all_finite(yz));

    Tensor gy = random_tensor({3, 4, 5}, rng);
    auto loss = [&]() { return dot(energy_normalize(x), gy); };
    Tensor gx = energy_normalize_backward(x, gy);
    std::vector<double> got, want;
    for (size_t i = 0; i < x.data.size(); ++i) {
        got.push_back(gx.data[i]);
        want.push_back(fd(loss, &x.data[i], 1e-6));
    }
    EXPECT_LT(grad_rel_err(got, want), 1e-5);
}

TEST(SoftmaxColumns, SumsToOne) {
    Rng rng(23);
    Tensor logits = random_tensor({73, 18}, rng, 5.0);
    Tensor p = softmax_columns(logits);
    for (int t = 0; t < 18; ++t) {
        double s = 0.0;
        for (int k = 0; k < 73; ++k) s += p.at(k, t);
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Adam, DescendsQuadraticAndRespectsFreeze) {
    Param p1("free", {4});
    Param p2("frozen.x", {4});
    Rng rng(29);
    for (auto& v : p1.value.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : p2.value.data) v = rng.uniform(-1.0, 1.0);
    std::vector<double> frozen_before = p2.value.data;

    ParamList params{&p1, &p2};
    Adam adam(0.05);
    adam.attach(params);
    auto loss = [&]() {
        double s = 0.0;
        for (double v : p1.value.data) s += v * v;
        return s;
    };
    double before = loss();
    for (int step = 0; step < 50; ++step) {
        adam.zero_grad(params);
        for (size_t i = 0; i < 4; ++i) {
            p1.grad.data[i] = 2.0 * p1.value.data[i];
            p2.grad.data[i] = 1.0;  // would move it if not frozen
        }
        adam.step(params, {"frozen.x"});
    }
    EXPECT_LT(loss(), before * 0.1);
    EXPECT_EQ(p2.value.data, frozen_before);  // bitwise identical
}

TEST(ParallelSamples, DeterministicAccumulation) {
    Param p("acc", {8});
    ParamList params{&p};
    auto run = [&](int workers) {
        std::vector<GradBuffer> buffers;
        for (int w = 0; w < workers; ++w) buffers.emplace_back(params);
        parallel_samples(64, workers, [&](int i, int w) {
            Tensor& g = buffers[static_cast<size_t>(w)].grad(p);
            for (size_t k = 0; k < g.data.size(); ++k)
                g.data[k] += std::sin(0.1 * i + static_cast<double>(k));
        });
        p.grad.zero();
        for (auto& b : buffers) b.fold_into_params();
        return p.grad.data;
    };
    auto a = run(2);
    auto b = run(2);
    EXPECT_EQ(a, b);  // same worker count, bitwise reproducible
}
