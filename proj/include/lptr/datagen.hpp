#pragma once

#include <array>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lptr/charset.hpp"
#include "lptr/core/image.hpp"
#include "lptr/core/random.hpp"
#include "lptr/geometry.hpp"
#include "lptr/rectifier.hpp"

namespace lptr::datagen {

// --- glyph artwork ---------------------------------------------------------

struct GlyphBitmap {
    int w = 0, h = 0;
    std::vector<float> alpha;  // row-major coverage in [0, 1]
};

/// Glyph source: bitmaps from a font directory (<glyph>.pgm), with a
/// deterministic procedural fallback so tests and default runs need no
/// external artwork. Digits and letters use a built-in 5x7 face; other
/// glyphs get a fixed pseudo-glyph derived from their code points.
class GlyphLibrary {
public:
    explicit GlyphLibrary(std::string font_dir = "", bool procedural_fallback = true);
    const GlyphBitmap& bitmap(const std::string& glyph) const;  // MissingGlyphFont

private:
    std::string font_dir_;
    bool fallback_;
    mutable std::unordered_map<std::string, GlyphBitmap> cache_;
};

// --- plate templates ---------------------------------------------------------

enum class Layout { single_line, double_line };

std::string layout_name(Layout l);
Layout layout_from_name(const std::string& s);

struct PlateSpec {
    Layout layout = Layout::single_line;
    std::string glyphs;  // 7 glyphs: province + letter + 5 alphanumerics
    std::array<double, 3> fg{0.97, 0.97, 0.97};
    std::array<double, 3> bg{0.05, 0.22, 0.75};
};

struct RenderedPlate {
    Tensor image;                             // (3, H, W) frontal template
    std::vector<geometry::Point2> vertices;   // 4 corners or 6 hexad points, px
    std::vector<std::array<double, 4>> char_boxes;  // per-glyph x1,y1,x2,y2
};

/// Frontal plate at template resolution (440x140 single, 440x220 double with
/// the row boundary at mid-height). Throws MissingGlyphFont if a glyph has no
/// artwork and the fallback is disabled.
RenderedPlate render_plate(const PlateSpec& spec, const GlyphLibrary& fonts,
                           uint64_t seed = 0);

// --- augmentation ------------------------------------------------------------

enum class BlurKind { motion, defocus };

/// magnitude 0 returns the input bit-identically; motion is an oriented box
/// kernel of roughly `magnitude` pixels (angle drawn from seed), defocus an
/// isotropic Gaussian with sigma = magnitude. Kernels are normalized and the
/// border is replicated.
Tensor augment_blur(const Tensor& image, BlurKind kind, double magnitude,
                    uint64_t seed);

// --- compositing ---------------------------------------------------------------

struct PlateSample {
    std::string image_path;  // empty for in-memory samples
    std::string plate;
    Layout layout = Layout::single_line;
    int width = 0, height = 0;        // scene dimensions
    std::array<double, 4> bbox{};     // x1,y1,x2,y2 pixels
    std::vector<geometry::Point2> vertices;  // 4 or 6, pixel coords
    uint64_t seed = 0;
    std::string category = "standard";  // standard | special
    std::string split;                  // train | valid | test
};

struct CompositeResult {
    Tensor scene;
    PlateSample sample;
};

/// Warps the frontal plate onto the background through the homography given
/// by its outer corners -> dst outer corners, records the dst vertices as
/// ground truth and the clipped tight AABB as the bounding box.
/// dst_vertices: 4 points (single) or 6 hexad points (double).
CompositeResult composite(const RenderedPlate& plate, const Tensor& background,
                          const std::vector<geometry::Point2>& dst_vertices,
                          const std::string& plate_string, Layout layout,
                          uint64_t seed = 0);

/// Adds independent Gaussian offsets (std = sigma px) to every bbox
/// coordinate and every vertex coordinate, then clips to the scene bounds.
PlateSample perturb_localization(const PlateSample& sample, double sigma,
                                 uint64_t seed);

// --- label audit ----------------------------------------------------------------

struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

double iou(const Box& a, const Box& b);

struct AuditResult {
    std::vector<size_t> pass;
    std::vector<size_t> fail;
};

/// Marks label i correct when iou(labels[i], detections[i]) exceeds the
/// threshold.
AuditResult audit_labels(const std::vector<Box>& labels,
                         const std::vector<Box>& detections,
                         double threshold = 0.6);

// --- manifest -------------------------------------------------------------------

/// Line-oriented TSV, one sample per line:
///   path, plate, layout, width, height, bbox(x1,y1,x2,y2),
///   vertices(x,y;...), seed, category, split
/// Samples without a split get one assigned by seeded hash at a ratio of
/// 8:1:1 train/valid/test.
void write_manifest(const std::vector<PlateSample>& samples, const std::string& path,
                    uint64_t split_seed = 1);
std::vector<PlateSample> read_manifest(const std::string& path);

std::string assign_split(uint64_t split_seed, uint64_t sample_seed);

// --- procedural scenery and plate strings ---------------------------------------

Tensor make_background(int height, int width, uint64_t seed);

/// Random plate text: province glyph + letter + five alphanumerics.
/// province_id >= 0 pins the leading glyph.
std::string random_plate_string(Rng& rng, const Charset& cs, int province_id = -1);

// --- full scene generation (gen-data path) --------------------------------------

struct GenConfig {
    int count = 100;
    uint64_t seed = 1;
    Layout layout = Layout::single_line;
    int scene_h = 192, scene_w = 256;
    double plate_frac_min = 0.45, plate_frac_max = 0.75;  // plate width / scene width
    double perspective = 0.08;   // corner jitter, fraction of plate size
    double rotate_max_deg = 10.0;
    double blur_prob = 0.5;
    double blur_max = 1.2;
    double special_frac = 0.0;   // fraction tagged "special"
};

/// Generates scenes and returns their samples; sink receives each scene
/// image (by index) for saving or in-memory use.
std::vector<PlateSample> generate_scenes(
    const GenConfig& cfg, const Charset& cs, const GlyphLibrary& fonts,
    const std::function<void(size_t, const Tensor&, PlateSample&)>& sink);

/// Projects the template anchor points through the rectangle->quad homography
/// used to composite; 4 anchors for single, 6 for double.
std::vector<geometry::Point2> project_template_vertices(
    const RenderedPlate& plate, const std::vector<geometry::Point2>& dst_outer);

}  // namespace lptr::datagen
