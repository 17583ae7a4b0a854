#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lptr/core/tensor.hpp"

namespace lptr {

// Images are Tensors of shape (C, H, W) with values in [0, 1].
// C is 1 (gray) or 3 (RGB). 8-bit conversion happens only at the file
// boundary; all arithmetic stays in double.

inline int image_channels(const Tensor& img) { return img.dim(0); }
inline int image_height(const Tensor& img) { return img.dim(1); }
inline int image_width(const Tensor& img) { return img.dim(2); }

Tensor make_image(int channels, int height, int width, double fill = 0.0);

/// Non-differentiable bilinear resize (data-path utility; the differentiable
/// sampler lives in geometry).
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);

/// Horizontal concatenation of two images with equal channel count and height.
Tensor hconcat(const Tensor& left, const Tensor& right);

Tensor rgb_to_gray(const Tensor& img);

// --- file I/O ------------------------------------------------------------

/// Writes an 8-bit PNG (gray or RGB depending on channel count).
void write_png(const std::string& path, const Tensor& img);

/// Reads an 8-bit PNG (gray, RGB or RGBA; alpha is dropped). No interlace.
Tensor read_png(const std::string& path);

/// Binary PPM (P6) / PGM (P5).
void write_pnm(const std::string& path, const Tensor& img);
Tensor read_pnm(const std::string& path);

/// Dispatch on extension: .png, .ppm, .pgm.
Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& img);

std::vector<uint8_t> image_to_u8(const Tensor& img);
Tensor image_from_u8(const uint8_t* data, int channels, int height, int width);

}  // namespace lptr
