#pragma once

#include <array>
#include <vector>

#include "lptr/core/tensor.hpp"

namespace lptr::geometry {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Four corners in fixed order: top-left, top-right, bottom-right, bottom-left.
/// Coordinates are normalized to the image (0..1 across width/height) but may
/// leave [0,1] after perturbation.
struct Quad {
    std::array<Point2, 4> corners;
};

/// Perspective map with the ninth matrix entry fixed to 1. Maps normalized
/// output coordinates (u, v) to normalized input coordinates:
///   x = (t1*u + t2*v + t3) / d,  y = (t4*u + t5*v + t6) / d,
///   d = 1 + t7*u + t8*v.
struct Homography {
    std::array<double, 8> theta{1, 0, 0, 0, 1, 0, 0, 0};

    static Homography identity() { return Homography{}; }
};

/// Backward-warp grid: coords[r*width + c] is the input-image position for
/// output pixel (r, c), in normalized input coordinates.
struct SamplingGrid {
    int width = 0;
    int height = 0;
    std::vector<Point2> coords;  // row-major, height*width entries

    Point2& at(int r, int c) { return coords[static_cast<size_t>(r) * width + c]; }
    const Point2& at(int r, int c) const {
        return coords[static_cast<size_t>(r) * width + c];
    }
};

Quad unit_square();

/// Signed area of the polygon (shoelace). Positive for TL,TR,BR,BL order in
/// image coordinates (y down).
double signed_area(const Quad& q);

/// True iff the corners form a strictly convex, non-self-intersecting polygon
/// with positive signed area, up to tolerance eps on each cross product.
bool is_strictly_convex(const Quad& q, double eps = 1e-9);

/// Solves the 8x8 four-correspondence system: the returned map takes dst
/// corner i to src corner i. Throws SingularSystem on a rank-deficient system.
Homography solve_homography(const Quad& src, const Quad& dst);

/// Gradient of a scalar loss with respect to the src corner coordinates,
/// given the loss gradient with respect to theta. dst is treated as constant
/// (it is a fixed rectangle everywhere in this project). Returns
/// (dx0, dy0, dx1, dy1, dx2, dy2, dx3, dy3).
std::array<double, 8> solve_homography_backward(const Quad& src, const Quad& dst,
                                                const Homography& h,
                                                const std::array<double, 8>& grad_theta);

/// Applies the map to one point. Throws DegenerateDenominator when
/// |1 + t7*x + t8*y| < 1e-12.
Point2 apply_homography(const Homography& h, const Point2& p);

/// Backward-warp grid with pixel-center convention: output pixel (r, c) maps
/// the point ((c+0.5)/width, (r+0.5)/height).
SamplingGrid make_grid(const Homography& h, int width, int height);

/// Accumulates the loss gradient with respect to theta from gradients on the
/// grid coordinates (same layout as SamplingGrid::coords, interleaved x,y).
std::array<double, 8> make_grid_backward(const Homography& h, int width, int height,
                                         const std::vector<Point2>& grad_coords);

/// Bilinear sampling of a (C, H, W) image at the grid positions; coordinates
/// outside the image clamp to the border. Output is (C, grid.height,
/// grid.width).
Tensor bilinear_sample(const Tensor& image, const SamplingGrid& grid);

/// Backward pass of bilinear_sample. Accumulates into grad_image (same shape
/// as image, may be null) and returns the gradient with respect to the grid
/// coordinates.
std::vector<Point2> bilinear_sample_backward(const Tensor& image,
                                             const SamplingGrid& grid,
                                             const Tensor& grad_output,
                                             Tensor* grad_image);

/// make_grid + bilinear_sample.
Tensor warp(const Tensor& image, const Homography& h, int width, int height);

/// Gradient of a scalar loss with respect to theta for a warp of `image`
/// (image treated as data, not parameters).
std::array<double, 8> warp_backward_theta(const Tensor& image, const Homography& h,
                                          int width, int height,
                                          const Tensor& grad_output);

}  // namespace lptr::geometry
