#include "lptr/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "lptr/core/error.hpp"

namespace lptr::geometry {

Quad unit_square() {
    return Quad{{Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}}};
}

double signed_area(const Quad& q) {
    double a = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Point2& p = q.corners[i];
        const Point2& n = q.corners[(i + 1) % 4];
        a += p.x * n.y - n.x * p.y;
    }
    return 0.5 * a;
}

bool is_strictly_convex(const Quad& q, double eps) {
    // all consecutive cross products must share the sign of the area
    double area = signed_area(q);
    if (!(area > eps)) return false;
    for (int i = 0; i < 4; ++i) {
        const Point2& a = q.corners[i];
        const Point2& b = q.corners[(i + 1) % 4];
        const Point2& c = q.corners[(i + 2) % 4];
        double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if (!(cross > eps)) return false;
    }
    return true;
}

namespace {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

// Rows 2i, 2i+1 of the four-correspondence system:
//   [U V 1 0 0 0 -X*U -X*V] theta = X
//   [0 0 0 U V 1 -Y*U -Y*V] theta = Y
void build_system(const Quad& src, const Quad& dst, Mat8& A, Vec8& b) {
    A.setZero();
    for (int i = 0; i < 4; ++i) {
        const double U = dst.corners[i].x, V = dst.corners[i].y;
        const double X = src.corners[i].x, Y = src.corners[i].y;
        A(2 * i, 0) = U;
        A(2 * i, 1) = V;
        A(2 * i, 2) = 1.0;
        A(2 * i, 6) = -X * U;
        A(2 * i, 7) = -X * V;
        A(2 * i + 1, 3) = U;
        A(2 * i + 1, 4) = V;
        A(2 * i + 1, 5) = 1.0;
        A(2 * i + 1, 6) = -Y * U;
        A(2 * i + 1, 7) = -Y * V;
        b(2 * i) = X;
        b(2 * i + 1) = Y;
    }
}

}  // namespace

Homography solve_homography(const Quad& src, const Quad& dst) {
    Mat8 A;
    Vec8 b;
    build_system(src, dst, A, b);
    Eigen::FullPivLU<Mat8> lu(A);
    if (!lu.isInvertible()) throw SingularSystem("four-point system is rank-deficient");
    Vec8 theta = lu.solve(b);
    Homography h;
    for (int i = 0; i < 8; ++i) h.theta[i] = theta(i);
    return h;
}

std::array<double, 8> solve_homography_backward(const Quad& src, const Quad& dst,
                                                const Homography& h,
                                                const std::array<double, 8>& grad_theta) {
    // theta = A^-1 b with A and b functions of the src corners.
    // With g = A^-T gtheta:  dL/db = g,  dL/dA = -g theta^T.
    Mat8 A;
    Vec8 b;
    build_system(src, dst, A, b);
    Eigen::FullPivLU<Mat8> lu(A);
    if (!lu.isInvertible()) throw SingularSystem("four-point system is rank-deficient");
    Vec8 gt;
    for (int i = 0; i < 8; ++i) gt(i) = grad_theta[i];
    Vec8 g = lu.transpose().solve(gt);

    std::array<double, 8> grad_src{};
    for (int i = 0; i < 4; ++i) {
        const double U = dst.corners[i].x, V = dst.corners[i].y;
        // X_i appears in b(2i) and in A(2i,6) = -X*U, A(2i,7) = -X*V
        double gX = g(2 * i);
        gX += -g(2 * i) * h.theta[6] * (-U);
        gX += -g(2 * i) * h.theta[7] * (-V);
        // Y_i appears in b(2i+1) and in A(2i+1,6), A(2i+1,7)
        double gY = g(2 * i + 1);
        gY += -g(2 * i + 1) * h.theta[6] * (-U);
        gY += -g(2 * i + 1) * h.theta[7] * (-V);
        grad_src[2 * i] = gX;
        grad_src[2 * i + 1] = gY;
    }
    return grad_src;
}

Point2 apply_homography(const Homography& h, const Point2& p) {
    const auto& t = h.theta;
    double d = 1.0 + t[6] * p.x + t[7] * p.y;
    if (std::fabs(d) < 1e-12)
        throw DegenerateDenominator("denominator vanished at mapped point");
    return Point2{(t[0] * p.x + t[1] * p.y + t[2]) / d,
                  (t[3] * p.x + t[4] * p.y + t[5]) / d};
}

SamplingGrid make_grid(const Homography& h, int width, int height) {
    SamplingGrid grid;
    grid.width = width;
    grid.height = height;
    grid.coords.resize(static_cast<size_t>(width) * height);
    for (int r = 0; r < height; ++r) {
        double v = (r + 0.5) / height;
        for (int c = 0; c < width; ++c) {
            double u = (c + 0.5) / width;
            grid.at(r, c) = apply_homography(h, Point2{u, v});
        }
    }
    return grid;
}

std::array<double, 8> make_grid_backward(const Homography& h, int width, int height,
                                         const std::vector<Point2>& grad_coords) {
    const auto& t = h.theta;
    std::array<double, 8> gt{};
    for (int r = 0; r < height; ++r) {
        double v = (r + 0.5) / height;
        for (int c = 0; c < width; ++c) {
            double u = (c + 0.5) / width;
            double d = 1.0 + t[6] * u + t[7] * v;
            double X = (t[0] * u + t[1] * v + t[2]) / d;
            double Y = (t[3] * u + t[4] * v + t[5]) / d;
            const Point2& g = grad_coords[static_cast<size_t>(r) * width + c];
            gt[0] += g.x * u / d;
            gt[1] += g.x * v / d;
            gt[2] += g.x / d;
            gt[3] += g.y * u / d;
            gt[4] += g.y * v / d;
            gt[5] += g.y / d;
            gt[6] += -(g.x * X + g.y * Y) * u / d;
            gt[7] += -(g.x * X + g.y * Y) * v / d;
        }
    }
    return gt;
}

namespace {

// pixel centers sit at (i + 0.5) in pixel units; snap away the last-ulp
// error so sampling exactly at a center returns that pixel exactly
inline double to_pixel_coord(double normalized, int extent) {
    double p = normalized * extent - 0.5;
    double r = std::round(p);
    return std::fabs(p - r) < 1e-9 ? r : p;
}

}  // namespace

Tensor bilinear_sample(const Tensor& image, const SamplingGrid& grid) {
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (image.numel() == 0) throw ShapeMismatch("bilinear_sample on empty image");
    Tensor out({C, grid.height, grid.width});
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            const Point2& p = grid.at(r, c);
            double px = to_pixel_coord(p.x, W);
            double py = to_pixel_coord(p.y, H);
            int x0 = static_cast<int>(std::floor(px));
            int y0 = static_cast<int>(std::floor(py));
            double fx = px - x0, fy = py - y0;
            int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
            int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
            for (int ch = 0; ch < C; ++ch) {
                double v00 = image.at(ch, y0c, x0c), v01 = image.at(ch, y0c, x1c);
                double v10 = image.at(ch, y1c, x0c), v11 = image.at(ch, y1c, x1c);
                out.at(ch, r, c) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                   fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }
    return out;
}

std::vector<Point2> bilinear_sample_backward(const Tensor& image,
                                             const SamplingGrid& grid,
                                             const Tensor& grad_output,
                                             Tensor* grad_image) {
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    std::vector<Point2> grad_grid(grid.coords.size());
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            const Point2& p = grid.at(r, c);
            double px = to_pixel_coord(p.x, W);
            double py = to_pixel_coord(p.y, H);
            int x0 = static_cast<int>(std::floor(px));
            int y0 = static_cast<int>(std::floor(py));
            double fx = px - x0, fy = py - y0;
            int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
            int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
            double gx = 0.0, gy = 0.0;
            for (int ch = 0; ch < C; ++ch) {
                double go = grad_output.at(ch, r, c);
                double v00 = image.at(ch, y0c, x0c), v01 = image.at(ch, y0c, x1c);
                double v10 = image.at(ch, y1c, x0c), v11 = image.at(ch, y1c, x1c);
                // d(out)/d(px): weights vary with fx only while the corner
                // pixels stay fixed; the clamp zeroes the derivative once the
                // sampling point leaves the image, matching the clamped value.
                double dfx = (1 - fy) * (v01 - v00) + fy * (v11 - v10);
                double dfy = (1 - fx) * (v10 - v00) + fx * (v11 - v01);
                gx += go * dfx;
                gy += go * dfy;
                if (grad_image) {
                    grad_image->at(ch, y0c, x0c) += go * (1 - fy) * (1 - fx);
                    grad_image->at(ch, y0c, x1c) += go * (1 - fy) * fx;
                    grad_image->at(ch, y1c, x0c) += go * fy * (1 - fx);
                    grad_image->at(ch, y1c, x1c) += go * fy * fx;
                }
            }
            // chain px = x*W - 0.5, py = y*H - 0.5; kill the gradient where
            // both neighbors clamped to the same pixel (flat region)
            if (x0c == x1c) gx = 0.0;
            if (y0c == y1c) gy = 0.0;
            grad_grid[static_cast<size_t>(r) * grid.width + c] =
                Point2{gx * W, gy * H};
        }
    }
    return grad_grid;
}

Tensor warp(const Tensor& image, const Homography& h, int width, int height) {
    return bilinear_sample(image, make_grid(h, width, height));
}

std::array<double, 8> warp_backward_theta(const Tensor& image, const Homography& h,
                                          int width, int height,
                                          const Tensor& grad_output) {
    SamplingGrid grid = make_grid(h, width, height);
    std::vector<Point2> gg = bilinear_sample_backward(image, grid, grad_output, nullptr);
    return make_grid_backward(h, width, height, gg);
}

}  // namespace lptr::geometry
