#pragma once

#include <vector>

#include "lptr/charset.hpp"
#include "lptr/datagen.hpp"
#include "lptr/rectifier.hpp"

namespace lptr::dataset {

/// Configuration for synthesizing localization-style training crops: a plate
/// composited with perspective distortion into a bounding-box-sized canvas,
/// mimicking detector output, plus the vertex-rectified view of the same
/// plate.
struct CropConfig {
    int count = 100;
    uint64_t seed = 1;
    datagen::Layout layout = datagen::Layout::single_line;
    int crop_h = 64, crop_w = 128;
    double margin_min = 0.04, margin_max = 0.16;  // background margin per side
    double perspective = 0.10;                    // corner jitter / plate size
    double rotate_max_deg = 12.0;
    double blur_prob = 0.5;
    double blur_max = 1.0;
    double vertex_sigma = 0.0;  // px noise on the vertices used for gt rectification
    int rect_h = 24, rect_w = 94;
    int upper_w = 27, lower_w = 67;
    int province_id = -1;            // pin the leading glyph (-1 = uniform)
    std::vector<int> province_pool;  // weighted pool (ids repeated by weight)
};

struct TrainSample {
    Tensor bbox_crop;    // (3, crop_h, crop_w)
    Tensor vertex_crop;  // (3, rect_h, rect_w), rectified with true vertices
    geometry::Quad gt_quad;  // plate corners, normalized to the bbox crop
    ptr::Hexad gt_hexad;     // double-line vertices (normalized), if applicable
    std::vector<int> label;
    std::string plate;
    datagen::Layout layout = datagen::Layout::single_line;
};

std::vector<TrainSample> build_crop_dataset(const CropConfig& cfg, const Charset& cs,
                                            const datagen::GlyphLibrary& fonts);

/// Rectifies an image given plate corners in normalized image coordinates.
Tensor rectify_with_quad(const Tensor& image, const geometry::Quad& quad_norm,
                         int out_h, int out_w);

/// Resamples the bounding-box region of a scene to a fixed-size crop.
Tensor crop_bbox_region(const Tensor& scene, const std::array<double, 4>& bbox,
                        int out_h, int out_w);

/// Builds a training sample from a manifest entry and its scene image:
/// bounding-box crop, ground-truth-rectified view, and vertex coordinates
/// normalized to the crop frame.
TrainSample sample_from_scene(const Tensor& scene, const datagen::PlateSample& meta,
                              const Charset& cs, int crop_h = 64, int crop_w = 128,
                              int rect_h = 24, int rect_w = 94, int upper_w = 27,
                              int lower_w = 67);

/// Double-line ground-truth rectification: both halves warped and
/// concatenated (upper_w + lower_w columns).
Tensor rectify_with_hexad(const Tensor& image, const ptr::Hexad& hexad_norm,
                          int out_h, int upper_w, int lower_w);

}  // namespace lptr::dataset
