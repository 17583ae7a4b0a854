#include "lptr/geometry.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "lptr/core/error.hpp"
#include "test_util.hpp"

using namespace lptr;
using namespace lptr::geometry;
using lptr::testutil::fd;
using lptr::testutil::grad_rel_err;
using lptr::testutil::random_convex_quad;
using lptr::testutil::rel_err;

namespace {

Point2 rational_map(const std::array<double, 8>& t, double x, double y) {
    // independent long-double evaluation of the mapping formula
    long double d = 1.0L + static_cast<long double>(t[6]) * x +
                    static_cast<long double>(t[7]) * y;
    long double px = (static_cast<long double>(t[0]) * x +
                      static_cast<long double>(t[1]) * y + t[2]) / d;
    long double py = (static_cast<long double>(t[3]) * x +
                      static_cast<long double>(t[4]) * y + t[5]) / d;
    return Point2{static_cast<double>(px), static_cast<double>(py)};
}

}  // namespace

TEST(SolveHomography, IdentityOnUnitSquare) {
    Homography h = solve_homography(unit_square(), unit_square());
    const double expect[8] = {1, 0, 0, 0, 1, 0, 0, 0};
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(h.theta[i], expect[i], 1e-12);
}

TEST(SolveHomography, PureTranslation) {
    Quad src = unit_square();
    for (auto& c : src.corners) {
        c.x += 0.1;
        c.y += 0.2;
    }
    Homography h = solve_homography(src, unit_square());
    const double expect[8] = {1, 0, 0.1, 0, 1, 0.2, 0, 0};
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(h.theta[i], expect[i], 1e-12);
}

TEST(SolveHomography, CornerReprojectionResidual) {
    Rng rng(7);
    auto t0 = std::chrono::steady_clock::now();
    double max_residual = 0.0;
    for (int i = 0; i < 1000; ++i) {
        Quad src = random_convex_quad(rng);
        Homography h = solve_homography(src, unit_square());
        for (int k = 0; k < 4; ++k) {
            Point2 p = apply_homography(h, unit_square().corners[k]);
            max_residual = std::max(max_residual, std::fabs(p.x - src.corners[k].x));
            max_residual = std::max(max_residual, std::fabs(p.y - src.corners[k].y));
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LT(max_residual, 1e-9);
    EXPECT_LT(secs, 5.0);
}

TEST(SolveHomography, SingularSystemOnDegenerateQuad) {
    Quad src = unit_square();
    src.corners[2] = src.corners[1];  // two coincident corners
    EXPECT_THROW(solve_homography(src, unit_square()), SingularSystem);
}

TEST(SolveHomography, CompositionRecoversCorners) {
    Rng rng(21);
    for (int i = 0; i < 50; ++i) {
        Quad a = random_convex_quad(rng);
        Quad b = random_convex_quad(rng);
        Homography h = solve_homography(a, b);
        for (int k = 0; k < 4; ++k) {
            Point2 p = apply_homography(h, b.corners[k]);
            EXPECT_NEAR(p.x, a.corners[k].x, 1e-8);
            EXPECT_NEAR(p.y, a.corners[k].y, 1e-8);
        }
    }
}

TEST(ApplyHomography, IdentityAndTranslation) {
    Homography id;
    Point2 p = apply_homography(id, Point2{0.3, 0.7});
    EXPECT_DOUBLE_EQ(p.x, 0.3);
    EXPECT_DOUBLE_EQ(p.y, 0.7);

    Homography tr;
    tr.theta = {1, 0, 0.1, 0, 1, 0.2, 0, 0};
    Point2 q = apply_homography(tr, Point2{0, 0});
    EXPECT_DOUBLE_EQ(q.x, 0.1);
    EXPECT_DOUBLE_EQ(q.y, 0.2);
}

TEST(ApplyHomography, MatchesRationalEvaluation) {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        Homography h;
        for (int k = 0; k < 6; ++k) h.theta[k] = rng.uniform(-1.0, 1.0);
        h.theta[6] = rng.uniform(-0.2, 0.2);
        h.theta[7] = rng.uniform(-0.2, 0.2);
        Point2 p{rng.uniform(), rng.uniform()};
        Point2 got = apply_homography(h, p);
        Point2 want = rational_map(h.theta, p.x, p.y);
        EXPECT_NEAR(got.x, want.x, 1e-12);
        EXPECT_NEAR(got.y, want.y, 1e-12);
    }
}

TEST(ApplyHomography, DegenerateDenominatorThrows) {
    Homography h;
    h.theta[6] = -2.0;  // denominator zero at x = 0.5, y = 0
    EXPECT_THROW(apply_homography(h, Point2{0.5, 0.0}), DegenerateDenominator);
}

TEST(MakeGrid, PixelCenters) {
    SamplingGrid g = make_grid(Homography::identity(), 2, 2);
    EXPECT_DOUBLE_EQ(g.at(0, 0).x, 0.25);
    EXPECT_DOUBLE_EQ(g.at(0, 0).y, 0.25);
    EXPECT_DOUBLE_EQ(g.at(0, 1).x, 0.75);
    EXPECT_DOUBLE_EQ(g.at(0, 1).y, 0.25);
    EXPECT_DOUBLE_EQ(g.at(1, 0).x, 0.25);
    EXPECT_DOUBLE_EQ(g.at(1, 0).y, 0.75);
    EXPECT_DOUBLE_EQ(g.at(1, 1).x, 0.75);
    EXPECT_DOUBLE_EQ(g.at(1, 1).y, 0.75);
}

TEST(MakeGrid, SinglePixel) {
    Homography h;
    h.theta = {1, 0, 0.1, 0, 1, 0.2, 0, 0};
    SamplingGrid g = make_grid(h, 1, 1);
    Point2 want = apply_homography(h, Point2{0.5, 0.5});
    EXPECT_DOUBLE_EQ(g.at(0, 0).x, want.x);
    EXPECT_DOUBLE_EQ(g.at(0, 0).y, want.y);
}

TEST(MakeGrid, MatchesPointwiseApply) {
    Rng rng(11);
    Homography h;
    for (int k = 0; k < 6; ++k) h.theta[k] = rng.uniform(-0.8, 0.8);
    h.theta[0] += 1.0;
    h.theta[4] += 1.0;
    h.theta[6] = rng.uniform(-0.1, 0.1);
    h.theta[7] = rng.uniform(-0.1, 0.1);
    SamplingGrid g = make_grid(h, 4, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            Point2 want = apply_homography(h, Point2{(c + 0.5) / 4, (r + 0.5) / 3});
            EXPECT_DOUBLE_EQ(g.at(r, c).x, want.x);
            EXPECT_DOUBLE_EQ(g.at(r, c).y, want.y);
        }
}

TEST(BilinearSample, ExactAtPixelCenters) {
    Tensor img = testutil::smooth_image(1, 4, 6, 5);
    SamplingGrid g;
    g.width = 6;
    g.height = 4;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c)
            g.coords.push_back(Point2{(c + 0.5) / 6, (r + 0.5) / 4});
    Tensor out = bilinear_sample(img, g);
    EXPECT_DOUBLE_EQ(max_abs_diff(out, img), 0.0);
}

TEST(BilinearSample, FourPixelCornerIsMean) {
    Tensor img({1, 2, 2});
    img.at(0, 0, 0) = 10;
    img.at(0, 0, 1) = 20;
    img.at(0, 1, 0) = 30;
    img.at(0, 1, 1) = 40;
    SamplingGrid g;
    g.width = 1;
    g.height = 1;
    g.coords = {Point2{0.5, 0.5}};  // shared corner of all four pixels
    Tensor out = bilinear_sample(img, g);
    EXPECT_NEAR(out.at(0, 0, 0), 25.0, 1e-12);
}

TEST(BilinearSample, MatchesScalarFormula) {
    Rng rng(13);
    Tensor img({2, 5, 7});
    for (auto& v : img.data) v = rng.uniform(0.0, 1.0);
    const int W = 7, H = 5;
    for (int i = 0; i < 50; ++i) {
        Point2 p{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        SamplingGrid g;
        g.width = 1;
        g.height = 1;
        g.coords = {p};
        Tensor out = bilinear_sample(img, g);
        for (int c = 0; c < 2; ++c) {
            double px = p.x * W - 0.5, py = p.y * H - 0.5;
            int x1 = static_cast<int>(std::floor(px)), y1 = static_cast<int>(std::floor(py));
            int x2 = x1 + 1, y2 = y1 + 1;
            double fx = px - x1, fy = py - y1;
            auto pix = [&](int y, int x) {
                return img.at(c, std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1));
            };
            // horizontal pair at each row, then vertical blend
            double f_top = (1 - fx) * pix(y1, x1) + fx * pix(y1, x2);
            double f_bot = (1 - fx) * pix(y2, x1) + fx * pix(y2, x2);
            double want = (1 - fy) * f_top + fy * f_bot;
            EXPECT_NEAR(out.at(c, 0, 0), want, 1e-9);
        }
    }
}

TEST(BilinearSample, ClampIdempotence) {
    Tensor img = testutil::smooth_image(1, 4, 6, 9);
    SamplingGrid far;
    far.width = 2;
    far.height = 1;
    far.coords = {Point2{-3.0, -5.0}, Point2{4.0, 7.0}};
    Tensor out = bilinear_sample(img, far);
    EXPECT_DOUBLE_EQ(out.at(0, 0, 0), img.at(0, 0, 0));
    EXPECT_DOUBLE_EQ(out.at(0, 0, 1), img.at(0, 3, 5));
}

TEST(Warp, IdentitySameSizeIsExact) {
    Tensor img = testutil::smooth_image(3, 24, 94, 2);
    Tensor out = warp(img, Homography::identity(), 94, 24);
    EXPECT_DOUBLE_EQ(max_abs_diff(out, img), 0.0);
}

TEST(Warp, HorizontalSqueezeMatchesOracle) {
    Tensor img = testutil::smooth_image(1, 8, 16, 4);
    Homography h;
    h.theta = {2, 0, 0, 0, 1, 0, 0, 0};  // x -> 2x: samples the left half at 2x step
    Tensor out = warp(img, h, 8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            SamplingGrid g;
            g.width = 1;
            g.height = 1;
            g.coords = {Point2{2.0 * (c + 0.5) / 8, (r + 0.5) / 8}};
            Tensor want = bilinear_sample(img, g);
            EXPECT_DOUBLE_EQ(out.at(0, r, c), want.at(0, 0, 0));
        }
}

TEST(Warp, InverseRoundTripInteriorPsnr) {
    Tensor img = testutil::smooth_image(1, 32, 64, 6);
    Quad src = unit_square();
    src.corners[0] = {0.05, 0.08};
    src.corners[1] = {0.97, 0.02};
    src.corners[2] = {0.93, 0.95};
    src.corners[3] = {0.02, 0.9};
    Homography fwd = solve_homography(src, unit_square());
    Tensor warped = warp(img, fwd, 64, 32);
    Homography inv = solve_homography(unit_square(), src);
    Tensor back = warp(warped, inv, 64, 32);
    // compare away from the border
    Tensor a({1, 20, 48}), b({1, 20, 48});
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 48; ++x) {
            a.at(0, y, x) = img.at(0, y + 6, x + 8);
            b.at(0, y, x) = back.at(0, y + 6, x + 8);
        }
    EXPECT_GT(psnr(a, b), 30.0);
}

TEST(GradCheck, BilinearSampleWrtGrid) {
    Tensor img = testutil::smooth_image(2, 9, 13, 17);
    Rng rng(31);
    SamplingGrid g;
    g.width = 5;
    g.height = 2;
    for (int i = 0; i < 10; ++i)
        g.coords.push_back(Point2{rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)});
    Tensor gout({2, 2, 5});
    for (auto& v : gout.data) v = rng.uniform(-1.0, 1.0);

    auto loss = [&]() {
        Tensor out = bilinear_sample(img, g);
        double s = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * gout.data[i];
        return s;
    };
    std::vector<Point2> gg = bilinear_sample_backward(img, g, gout, nullptr);
    std::vector<double> got, want;
    for (int i = 0; i < 10; ++i) {
        got.push_back(gg[static_cast<size_t>(i)].x);
        got.push_back(gg[static_cast<size_t>(i)].y);
        want.push_back(fd(loss, &g.coords[static_cast<size_t>(i)].x, 1e-5));
        want.push_back(fd(loss, &g.coords[static_cast<size_t>(i)].y, 1e-5));
    }
    EXPECT_LT(grad_rel_err(got, want), 1e-3);
}

TEST(GradCheck, BilinearSampleWrtImage) {
    Tensor img = testutil::smooth_image(1, 5, 6, 23);
    Rng rng(37);
    SamplingGrid g;
    g.width = 4;
    g.height = 1;
    for (int i = 0; i < 4; ++i)
        g.coords.push_back(Point2{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)});
    Tensor gout({1, 1, 4});
    for (auto& v : gout.data) v = rng.uniform(-1.0, 1.0);
    auto loss = [&]() {
        Tensor out = bilinear_sample(img, g);
        double s = 0.0;
        for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * gout.data[i];
        return s;
    };
    Tensor gimg(img.shape);
    bilinear_sample_backward(img, g, gout, &gimg);
    std::vector<double> got, want;
    for (size_t i = 0; i < img.data.size(); ++i) {
        got.push_back(gimg.data[i]);
        want.push_back(fd(loss, &img.data[i], 1e-5));
    }
    EXPECT_LT(grad_rel_err(got, want), 1e-3);
}

TEST(GradCheck, SolveHomographyWrtSrcCorners) {
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        Quad src = random_convex_quad(rng, 0.2);
        std::array<double, 8> w;
        for (auto& v : w) v = rng.uniform(-1.0, 1.0);
        auto loss = [&]() {
            Homography h = solve_homography(src, unit_square());
            double s = 0.0;
            for (int i = 0; i < 8; ++i) s += w[static_cast<size_t>(i)] * h.theta[static_cast<size_t>(i)];
            return s;
        };
        Homography h = solve_homography(src, unit_square());
        std::array<double, 8> grad = solve_homography_backward(src, unit_square(), h, w);
        std::vector<double> got(grad.begin(), grad.end());
        std::vector<double> want;
        for (int i = 0; i < 4; ++i) {
            want.push_back(fd(loss, &src.corners[static_cast<size_t>(i)].x, 1e-5));
            want.push_back(fd(loss, &src.corners[static_cast<size_t>(i)].y, 1e-5));
        }
        EXPECT_LT(grad_rel_err(got, want), 1e-3);
    }
}

TEST(GradCheck, MakeGridWrtTheta) {
    Rng rng(43);
    Homography h;
    h.theta = {1.1, 0.05, -0.02, -0.04, 0.9, 0.03, 0.05, -0.04};
    const int W = 5, H = 3;
    std::vector<Point2> gout;
    for (int i = 0; i < W * H; ++i)
        gout.push_back(Point2{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    auto loss = [&]() {
        SamplingGrid g = make_grid(h, W, H);
        double s = 0.0;
        for (size_t i = 0; i < g.coords.size(); ++i)
            s += g.coords[i].x * gout[i].x + g.coords[i].y * gout[i].y;
        return s;
    };
    std::array<double, 8> grad = make_grid_backward(h, W, H, gout);
    std::vector<double> got(grad.begin(), grad.end());
    std::vector<double> want;
    for (int i = 0; i < 8; ++i) want.push_back(fd(loss, &h.theta[static_cast<size_t>(i)], 1e-6));
    EXPECT_LT(grad_rel_err(got, want), 1e-3);
}

TEST(Quad, ConvexityChecks) {
    EXPECT_TRUE(is_strictly_convex(unit_square()));
    Quad hourglass = unit_square();
    std::swap(hourglass.corners[2], hourglass.corners[3]);  // self-intersecting
    EXPECT_FALSE(is_strictly_convex(hourglass));
    Quad reversed{{Point2{0, 0}, Point2{0, 1}, Point2{1, 1}, Point2{1, 0}}};
    EXPECT_FALSE(is_strictly_convex(reversed));  // negative area ordering
}
