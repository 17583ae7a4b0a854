#include "lptr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lptr/core/error.hpp"

namespace lptr::datagen {

using geometry::Point2;
using geometry::Quad;

// --- glyph artwork ---------------------------------------------------------

namespace {

// 5x7 faces for digits and the 24 plate letters.
struct Face5x7 {
    char ch;
    const char* rows[7];
};

const Face5x7 kFaces[] = {
    {'0', {"01110", "10001", "10011", "10101", "11001", "10001", "01110"}},
    {'1', {"00100", "01100", "00100", "00100", "00100", "00100", "01110"}},
    {'2', {"01110", "10001", "00001", "00010", "00100", "01000", "11111"}},
    {'3', {"11111", "00010", "00100", "00010", "00001", "10001", "01110"}},
    {'4', {"00010", "00110", "01010", "10010", "11111", "00010", "00010"}},
    {'5', {"11111", "10000", "11110", "00001", "00001", "10001", "01110"}},
    {'6', {"00110", "01000", "10000", "11110", "10001", "10001", "01110"}},
    {'7', {"11111", "00001", "00010", "00100", "01000", "01000", "01000"}},
    {'8', {"01110", "10001", "10001", "01110", "10001", "10001", "01110"}},
    {'9', {"01110", "10001", "10001", "01111", "00001", "00010", "01100"}},
    {'A', {"01110", "10001", "10001", "11111", "10001", "10001", "10001"}},
    {'B', {"11110", "10001", "10001", "11110", "10001", "10001", "11110"}},
    {'C', {"01110", "10001", "10000", "10000", "10000", "10001", "01110"}},
    {'D', {"11100", "10010", "10001", "10001", "10001", "10010", "11100"}},
    {'E', {"11111", "10000", "10000", "11110", "10000", "10000", "11111"}},
    {'F', {"11111", "10000", "10000", "11110", "10000", "10000", "10000"}},
    {'G', {"01110", "10001", "10000", "10111", "10001", "10001", "01111"}},
    {'H', {"10001", "10001", "10001", "11111", "10001", "10001", "10001"}},
    {'J', {"00111", "00010", "00010", "00010", "00010", "10010", "01100"}},
    {'K', {"10001", "10010", "10100", "11000", "10100", "10010", "10001"}},
    {'L', {"10000", "10000", "10000", "10000", "10000", "10000", "11111"}},
    {'M', {"10001", "11011", "10101", "10101", "10001", "10001", "10001"}},
    {'N', {"10001", "11001", "11001", "10101", "10011", "10011", "10001"}},
    {'P', {"11110", "10001", "10001", "11110", "10000", "10000", "10000"}},
    {'Q', {"01110", "10001", "10001", "10001", "10101", "10010", "01101"}},
    {'R', {"11110", "10001", "10001", "11110", "10100", "10010", "10001"}},
    {'S', {"01111", "10000", "10000", "01110", "00001", "00001", "11110"}},
    {'T', {"11111", "00100", "00100", "00100", "00100", "00100", "00100"}},
    {'U', {"10001", "10001", "10001", "10001", "10001", "10001", "01110"}},
    {'V', {"10001", "10001", "10001", "10001", "10001", "01010", "00100"}},
    {'W', {"10001", "10001", "10001", "10101", "10101", "10101", "01010"}},
    {'X', {"10001", "10001", "01010", "00100", "01010", "10001", "10001"}},
    {'Y', {"10001", "10001", "01010", "00100", "00100", "00100", "00100"}},
    {'Z', {"11111", "00001", "00010", "00100", "01000", "10000", "11111"}},
    {'-', {"00000", "00000", "00000", "01110", "00000", "00000", "00000"}},
};

GlyphBitmap face_bitmap(const Face5x7& f) {
    GlyphBitmap g;
    g.w = 5;
    g.h = 7;
    g.alpha.assign(35, 0.0f);
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c)
            if (f.rows[r][c] == '1') g.alpha[static_cast<size_t>(r) * 5 + c] = 1.0f;
    return g;
}

uint64_t glyph_hash(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Fixed pseudo-glyph for symbols without a bitmap face: a 9x9 stroke
/// pattern derived deterministically from the glyph bytes. Distinct symbols
/// get distinct, stable patterns, which is all the recognizer needs.
GlyphBitmap procedural_glyph(const std::string& glyph) {
    const int n = 9;
    GlyphBitmap g;
    g.w = n;
    g.h = n;
    g.alpha.assign(static_cast<size_t>(n) * n, 0.0f);
    Rng rng(glyph_hash(glyph));
    auto set = [&](int r, int c) {
        if (r >= 0 && r < n && c >= 0 && c < n)
            g.alpha[static_cast<size_t>(r) * n + c] = 1.0f;
    };
    int nh = 2 + static_cast<int>(rng.below(3));
    for (int i = 0; i < nh; ++i) {
        int r = static_cast<int>(rng.below(n));
        int c0 = static_cast<int>(rng.below(3));
        int c1 = n - 1 - static_cast<int>(rng.below(3));
        for (int c = c0; c <= c1; ++c) set(r, c);
    }
    int nv = 2 + static_cast<int>(rng.below(3));
    for (int i = 0; i < nv; ++i) {
        int c = static_cast<int>(rng.below(n));
        int r0 = static_cast<int>(rng.below(3));
        int r1 = n - 1 - static_cast<int>(rng.below(3));
        for (int r = r0; r <= r1; ++r) set(r, c);
    }
    int nd = 6 + static_cast<int>(rng.below(8));
    for (int i = 0; i < nd; ++i)
        set(static_cast<int>(rng.below(n)), static_cast<int>(rng.below(n)));
    return g;
}

}  // namespace

GlyphLibrary::GlyphLibrary(std::string font_dir, bool procedural_fallback)
    : font_dir_(std::move(font_dir)), fallback_(procedural_fallback) {}

const GlyphBitmap& GlyphLibrary::bitmap(const std::string& glyph) const {
    auto it = cache_.find(glyph);
    if (it != cache_.end()) return it->second;

    if (!font_dir_.empty()) {
        std::string path = font_dir_ + "/" + glyph + ".pgm";
        if (std::filesystem::exists(path)) {
            Tensor img = read_pnm(path);
            GlyphBitmap g;
            g.w = image_width(img);
            g.h = image_height(img);
            g.alpha.resize(static_cast<size_t>(g.w) * g.h);
            for (int y = 0; y < g.h; ++y)
                for (int x = 0; x < g.w; ++x)
                    g.alpha[static_cast<size_t>(y) * g.w + x] =
                        static_cast<float>(img.at(0, y, x));
            return cache_.emplace(glyph, std::move(g)).first->second;
        }
    }
    if (glyph.size() == 1) {
        for (const auto& f : kFaces)
            if (f.ch == glyph[0])
                return cache_.emplace(glyph, face_bitmap(f)).first->second;
    }
    if (!fallback_)
        throw MissingGlyphFont("no artwork for glyph '" + glyph + "'");
    return cache_.emplace(glyph, procedural_glyph(glyph)).first->second;
}

// --- templates -----------------------------------------------------------------

std::string layout_name(Layout l) {
    return l == Layout::single_line ? "single" : "double";
}

Layout layout_from_name(const std::string& s) {
    if (s == "single") return Layout::single_line;
    if (s == "double") return Layout::double_line;
    throw MalformedRecord("unknown layout '" + s + "'");
}

namespace {

void blend_glyph(Tensor& img, const GlyphBitmap& g,
                 const std::array<double, 4>& box,
                 const std::array<double, 3>& fg) {
    int x1 = static_cast<int>(std::lround(box[0]));
    int y1 = static_cast<int>(std::lround(box[1]));
    int x2 = static_cast<int>(std::lround(box[2]));
    int y2 = static_cast<int>(std::lround(box[3]));
    int bw = std::max(1, x2 - x1), bh = std::max(1, y2 - y1);
    // upscale the coverage map smoothly into the box
    Tensor a({1, g.h, g.w});
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x)
            a.at(0, y, x) = g.alpha[static_cast<size_t>(y) * g.w + x];
    Tensor up = resize_bilinear(a, bh, bw);
    for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) {
            double al = up.at(0, y, x);
            if (al <= 0.0) continue;
            int iy = y1 + y, ix = x1 + x;
            if (iy < 0 || iy >= image_height(img) || ix < 0 || ix >= image_width(img))
                continue;
            for (int c = 0; c < 3; ++c)
                img.at(c, iy, ix) = (1.0 - al) * img.at(c, iy, ix) + al * fg[c];
        }
}

}  // namespace

RenderedPlate render_plate(const PlateSpec& spec, const GlyphLibrary& fonts,
                           uint64_t seed) {
    std::vector<std::string> glyphs = utf8_glyphs(spec.glyphs);
    const bool dbl = spec.layout == Layout::double_line;
    const int W = 440, H = dbl ? 220 : 140;

    RenderedPlate out;
    out.image = make_image(3, H, W);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out.image.at(c, y, x) = spec.bg[c];

    // faint deterministic texture
    Rng rng(derive_seed(seed, 0x7133));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double n = rng.uniform(-0.02, 0.02);
            for (int c = 0; c < 3; ++c)
                out.image.at(c, y, x) =
                    std::clamp(out.image.at(c, y, x) + n, 0.0, 1.0);
        }

    // rim
    auto rim = [&](int x1, int y1, int x2, int y2) {
        for (int y = y1; y < y2; ++y)
            for (int x = x1; x < x2; ++x)
                for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = spec.fg[c];
    };
    rim(6, 6, W - 6, 9);
    rim(6, H - 9, W - 6, H - 6);
    rim(6, 6, 9, H - 6);
    rim(W - 9, 6, W - 6, H - 6);

    if (!dbl) {
        if (glyphs.size() < 7)
            throw MalformedRecord("single-line plate needs at least 7 glyphs");
        // standard char slots; even spacing when the count is non-standard
        std::vector<double> xs;
        double cw = 45.0;
        if (glyphs.size() == 7) {
            xs = {15, 72, 151.5, 208.5, 265.5, 322.5, 379.5};
        } else {
            double gap = (W - 30.0 - cw * glyphs.size()) / (glyphs.size() - 1);
            for (size_t i = 0; i < glyphs.size(); ++i)
                xs.push_back(15 + i * (cw + gap));
        }
        for (size_t i = 0; i < glyphs.size(); ++i) {
            std::array<double, 4> box{xs[i], 25, xs[i] + cw, 115};
            blend_glyph(out.image, fonts.bitmap(glyphs[i]), box, spec.fg);
            out.char_boxes.push_back(box);
        }
        out.vertices = {Point2{0, 0}, Point2{static_cast<double>(W), 0},
                        Point2{static_cast<double>(W), static_cast<double>(H)},
                        Point2{0, static_cast<double>(H)}};
    } else {
        if (glyphs.size() != 7)
            throw MalformedRecord("double-line plate needs exactly 7 glyphs");
        // two wide glyphs in the upper row, five in the lower row; the row
        // boundary sits at mid-height so identity offsets match the anchor
        // convention of the double-line rectifier
        double top[2] = {60, 240};
        for (int i = 0; i < 2; ++i) {
            std::array<double, 4> box{top[i], 17, top[i] + 140, 93};
            blend_glyph(out.image, fonts.bitmap(glyphs[static_cast<size_t>(i)]), box,
                        spec.fg);
            out.char_boxes.push_back(box);
        }
        for (int i = 0; i < 5; ++i) {
            double x = 22.5 + i * 83.0;
            std::array<double, 4> box{x, 127, x + 63, 203};
            blend_glyph(out.image, fonts.bitmap(glyphs[static_cast<size_t>(i + 2)]),
                        box, spec.fg);
            out.char_boxes.push_back(box);
        }
        double mid = H / 2.0;
        out.vertices = {Point2{0, 0},   Point2{static_cast<double>(W), 0},
                        Point2{0, mid}, Point2{static_cast<double>(W), mid},
                        Point2{0, static_cast<double>(H)},
                        Point2{static_cast<double>(W), static_cast<double>(H)}};
    }
    return out;
}

// --- blur ---------------------------------------------------------------------

namespace {

Tensor convolve_kernel(const Tensor& img, const std::vector<double>& k, int kw, int kh) {
    const int C = image_channels(img), H = image_height(img), W = image_width(img);
    const int cx = kw / 2, cy = kh / 2;
    Tensor out(img.shape);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double s = 0.0;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        double kv = k[static_cast<size_t>(ky) * kw + kx];
                        if (kv == 0.0) continue;
                        int iy = std::clamp(y + ky - cy, 0, H - 1);
                        int ix = std::clamp(x + kx - cx, 0, W - 1);
                        s += kv * img.at(c, iy, ix);
                    }
                out.at(c, y, x) = s;
            }
    return out;
}

}  // namespace

Tensor augment_blur(const Tensor& image, BlurKind kind, double magnitude,
                    uint64_t seed) {
    if (magnitude <= 0.0) return image;
    if (kind == BlurKind::defocus) {
        double sigma = magnitude;
        int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
        int n = 2 * r + 1;
        std::vector<double> k(static_cast<size_t>(n) * n);
        double sum = 0.0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double dx = x - r, dy = y - r;
                double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                k[static_cast<size_t>(y) * n + x] = v;
                sum += v;
            }
        for (auto& v : k) v /= sum;
        return convolve_kernel(image, k, n, n);
    }
    // motion: box segment of ~magnitude pixels at a seed-drawn angle,
    // bilinearly splatted then normalized
    Rng rng(derive_seed(seed, 0x6d6f));
    double angle = rng.uniform(0.0, M_PI);
    double len = std::max(1.0, magnitude);
    int r = static_cast<int>(std::ceil(len / 2.0)) + 1;
    int n = 2 * r + 1;
    std::vector<double> k(static_cast<size_t>(n) * n, 0.0);
    int steps = std::max(2, static_cast<int>(std::ceil(len * 4)));
    for (int i = 0; i < steps; ++i) {
        double t = -len / 2.0 + len * i / (steps - 1);
        double fx = r + t * std::cos(angle);
        double fy = r + t * std::sin(angle);
        int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
        double ax = fx - x0, ay = fy - y0;
        auto splat = [&](int xx, int yy, double w) {
            if (xx >= 0 && xx < n && yy >= 0 && yy < n)
                k[static_cast<size_t>(yy) * n + xx] += w;
        };
        splat(x0, y0, (1 - ax) * (1 - ay));
        splat(x0 + 1, y0, ax * (1 - ay));
        splat(x0, y0 + 1, (1 - ax) * ay);
        splat(x0 + 1, y0 + 1, ax * ay);
    }
    double sum = 0.0;
    for (double v : k) sum += v;
    for (auto& v : k) v /= sum;
    return convolve_kernel(image, k, n, n);
}

// --- compositing ------------------------------------------------------------------

namespace {

double sample_at(const Tensor& img, int c, double u, double v) {
    const int H = image_height(img), W = image_width(img);
    double px = u * W - 0.5, py = v * H - 0.5;
    int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
    double fx = px - x0, fy = py - y0;
    int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
    int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
    return (1 - fy) * ((1 - fx) * img.at(c, y0c, x0c) + fx * img.at(c, y0c, x1c)) +
           fy * ((1 - fx) * img.at(c, y1c, x0c) + fx * img.at(c, y1c, x1c));
}

Quad outer_quad(const std::vector<Point2>& vertices) {
    if (vertices.size() == 4)
        return Quad{{vertices[0], vertices[1], vertices[2], vertices[3]}};
    if (vertices.size() == 6)
        return Quad{{vertices[0], vertices[1], vertices[5], vertices[4]}};
    throw MalformedRecord("vertex list must have 4 or 6 points");
}

}  // namespace

CompositeResult composite(const RenderedPlate& plate, const Tensor& background,
                          const std::vector<geometry::Point2>& dst_vertices,
                          const std::string& plate_string, Layout layout,
                          uint64_t seed) {
    const int H = image_height(background), W = image_width(background);
    Quad dst_px = outer_quad(dst_vertices);
    Quad dst_norm;
    for (int i = 0; i < 4; ++i)
        dst_norm.corners[i] =
            Point2{dst_px.corners[i].x / W, dst_px.corners[i].y / H};
    if (!geometry::is_strictly_convex(dst_norm))
        throw DegenerateQuad("composite destination quad is not convex");

    // maps scene coordinates into the frontal template's unit square
    geometry::Homography to_template =
        geometry::solve_homography(geometry::unit_square(), dst_norm);

    CompositeResult res;
    res.scene = background;
    double bx1 = 1e30, by1 = 1e30, bx2 = -1e30, by2 = -1e30;
    for (const Point2& p : dst_vertices) {
        bx1 = std::min(bx1, p.x);
        by1 = std::min(by1, p.y);
        bx2 = std::max(bx2, p.x);
        by2 = std::max(by2, p.y);
    }
    int x1 = std::max(0, static_cast<int>(std::floor(bx1)));
    int y1 = std::max(0, static_cast<int>(std::floor(by1)));
    int x2 = std::min(W - 1, static_cast<int>(std::ceil(bx2)));
    int y2 = std::min(H - 1, static_cast<int>(std::ceil(by2)));
    for (int y = y1; y <= y2; ++y)
        for (int x = x1; x <= x2; ++x) {
            Point2 t = geometry::apply_homography(
                to_template, Point2{(x + 0.5) / W, (y + 0.5) / H});
            if (t.x < 0.0 || t.x > 1.0 || t.y < 0.0 || t.y > 1.0) continue;
            for (int c = 0; c < 3; ++c)
                res.scene.at(c, y, x) = sample_at(plate.image, c, t.x, t.y);
        }

    res.sample.plate = plate_string;
    res.sample.layout = layout;
    res.sample.width = W;
    res.sample.height = H;
    res.sample.bbox = {std::clamp(bx1, 0.0, static_cast<double>(W)),
                       std::clamp(by1, 0.0, static_cast<double>(H)),
                       std::clamp(bx2, 0.0, static_cast<double>(W)),
                       std::clamp(by2, 0.0, static_cast<double>(H))};
    res.sample.vertices = dst_vertices;
    res.sample.seed = seed;
    return res;
}

PlateSample perturb_localization(const PlateSample& sample, double sigma,
                                 uint64_t seed) {
    if (sigma <= 0.0) return sample;
    PlateSample out = sample;
    Rng rng(derive_seed(seed, 0x7065));
    for (double& v : out.bbox) v += rng.gaussian(0.0, sigma);
    for (Point2& p : out.vertices) {
        p.x += rng.gaussian(0.0, sigma);
        p.y += rng.gaussian(0.0, sigma);
    }
    // clip to scene bounds and keep the box well-formed
    double W = sample.width, H = sample.height;
    if (W > 0 && H > 0) {
        out.bbox[0] = std::clamp(out.bbox[0], 0.0, W);
        out.bbox[1] = std::clamp(out.bbox[1], 0.0, H);
        out.bbox[2] = std::clamp(out.bbox[2], 0.0, W);
        out.bbox[3] = std::clamp(out.bbox[3], 0.0, H);
        for (Point2& p : out.vertices) {
            p.x = std::clamp(p.x, 0.0, W);
            p.y = std::clamp(p.y, 0.0, H);
        }
    }
    if (out.bbox[2] < out.bbox[0] + 1.0) out.bbox[2] = std::min(W, out.bbox[0] + 1.0);
    if (out.bbox[3] < out.bbox[1] + 1.0) out.bbox[3] = std::min(H, out.bbox[1] + 1.0);
    return out;
}

// --- label audit -------------------------------------------------------------------

double iou(const Box& a, const Box& b) {
    double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    double inter = ix * iy;
    double ua = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return ua <= 0.0 ? 0.0 : inter / ua;
}

AuditResult audit_labels(const std::vector<Box>& labels,
                         const std::vector<Box>& detections, double threshold) {
    if (labels.size() != detections.size())
        throw ShapeMismatch("audit needs one detection per label");
    AuditResult res;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (iou(labels[i], detections[i]) > threshold)
            res.pass.push_back(i);
        else
            res.fail.push_back(i);
    }
    return res;
}

// --- procedural scenery / strings ----------------------------------------------

Tensor make_background(int height, int width, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6267));
    Tensor img({3, height, width});
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.15, 0.7);
        c1[c] = rng.uniform(0.15, 0.7);
    }
    // coarse value-noise grid, bilinearly upsampled
    const int gn = 8;
    Tensor noise({1, gn, gn});
    for (auto& v : noise.data) v = rng.uniform(-1.0, 1.0);
    Tensor up = resize_bilinear(noise, height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double t = (x + y) / static_cast<double>(width + height);
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = std::clamp(
                    c0[c] * (1 - t) + c1[c] * t + 0.12 * up.at(0, y, x), 0.0, 1.0);
        }
    // a few clutter rectangles
    int nrect = 2 + static_cast<int>(rng.below(5));
    for (int i = 0; i < nrect; ++i) {
        int rw = 4 + static_cast<int>(rng.below(static_cast<uint64_t>(width / 2)));
        int rh = 4 + static_cast<int>(rng.below(static_cast<uint64_t>(height / 2)));
        int rx = static_cast<int>(rng.below(static_cast<uint64_t>(width)));
        int ry = static_cast<int>(rng.below(static_cast<uint64_t>(height)));
        double col[3] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                         rng.uniform(0.1, 0.9)};
        for (int y = ry; y < std::min(height, ry + rh); ++y)
            for (int x = rx; x < std::min(width, rx + rw); ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(c, y, x) = 0.5 * img.at(c, y, x) + 0.5 * col[c];
    }
    return img;
}

std::string random_plate_string(Rng& rng, const Charset& cs, int province_id) {
    int prov = province_id >= 0 ? province_id : static_cast<int>(rng.below(31));
    std::string s = cs.glyph(prov);
    s += cs.glyph(48 + static_cast<int>(rng.below(24)));  // letter
    for (int i = 0; i < 5; ++i)
        s += cs.glyph(38 + static_cast<int>(rng.below(34)));  // digit or letter
    return s;
}

// --- scene generation ---------------------------------------------------------------

std::vector<geometry::Point2> project_template_vertices(
    const RenderedPlate& plate, const std::vector<geometry::Point2>& dst_outer) {
    const double tw = image_width(plate.image), th = image_height(plate.image);
    Quad dst = outer_quad(dst_outer);
    // maps template unit coordinates to destination (pixel) coordinates
    geometry::Homography h = geometry::solve_homography(dst, geometry::unit_square());
    std::vector<Point2> out;
    out.reserve(plate.vertices.size());
    for (const Point2& v : plate.vertices)
        out.push_back(geometry::apply_homography(h, Point2{v.x / tw, v.y / th}));
    return out;
}

std::vector<PlateSample> generate_scenes(
    const GenConfig& cfg, const Charset& cs, const GlyphLibrary& fonts,
    const std::function<void(size_t, const Tensor&, PlateSample&)>& sink) {
    std::vector<PlateSample> samples;
    samples.reserve(static_cast<size_t>(cfg.count));
    for (int i = 0; i < cfg.count; ++i) {
        uint64_t sseed = derive_seed(cfg.seed, static_cast<uint64_t>(i));
        Rng rng(sseed);
        PlateSpec spec;
        spec.layout = cfg.layout;
        spec.glyphs = random_plate_string(rng, cs);
        bool special = rng.uniform() < cfg.special_frac;
        if (special) std::swap(spec.fg, spec.bg);  // inverted colors as "special"
        RenderedPlate plate = render_plate(spec, fonts, sseed);
        if (rng.uniform() < cfg.blur_prob) {
            BlurKind kind = rng.uniform() < 0.5 ? BlurKind::motion : BlurKind::defocus;
            plate.image =
                augment_blur(plate.image, kind, rng.uniform(0.3, cfg.blur_max), sseed);
        }

        Tensor bg = make_background(cfg.scene_h, cfg.scene_w, sseed);
        const double tw = image_width(plate.image), th = image_height(plate.image);
        double frac = rng.uniform(cfg.plate_frac_min, cfg.plate_frac_max);
        double pw = frac * cfg.scene_w;
        double ph = pw * th / tw;

        std::vector<Point2> outer;
        for (int attempt = 0; attempt < 40; ++attempt) {
            double cx = rng.uniform(pw * 0.55, cfg.scene_w - pw * 0.55);
            double cy = rng.uniform(ph * 0.55, cfg.scene_h - ph * 0.55);
            double ang = rng.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg) * M_PI / 180.0;
            double ca = std::cos(ang), sa = std::sin(ang);
            Point2 base[4] = {{-pw / 2, -ph / 2}, {pw / 2, -ph / 2},
                              {pw / 2, ph / 2},  {-pw / 2, ph / 2}};
            std::vector<Point2> cand;
            bool ok = true;
            for (auto& b : base) {
                double jx = rng.uniform(-cfg.perspective, cfg.perspective) * pw;
                double jy = rng.uniform(-cfg.perspective, cfg.perspective) * ph;
                Point2 p{cx + b.x * ca - b.y * sa + jx, cy + b.x * sa + b.y * ca + jy};
                if (p.x < 1 || p.x > cfg.scene_w - 1 || p.y < 1 || p.y > cfg.scene_h - 1)
                    ok = false;
                cand.push_back(p);
            }
            if (!ok) continue;
            Quad q{{cand[0], cand[1], cand[2], cand[3]}};
            Quad qn;
            for (int k = 0; k < 4; ++k)
                qn.corners[k] = Point2{q.corners[k].x / cfg.scene_w,
                                       q.corners[k].y / cfg.scene_h};
            if (!geometry::is_strictly_convex(qn, 1e-6)) continue;
            outer = cand;
            break;
        }
        if (outer.empty()) {
            // centered axis-aligned fallback
            double cx = cfg.scene_w / 2.0, cy = cfg.scene_h / 2.0;
            outer = {Point2{cx - pw / 2, cy - ph / 2}, Point2{cx + pw / 2, cy - ph / 2},
                     Point2{cx + pw / 2, cy + ph / 2}, Point2{cx - pw / 2, cy + ph / 2}};
        }
        std::vector<Point2> verts = project_template_vertices(plate, outer);
        CompositeResult comp =
            composite(plate, bg, verts, spec.glyphs, cfg.layout, sseed);
        comp.sample.category = special ? "special" : "standard";
        sink(static_cast<size_t>(i), comp.scene, comp.sample);
        samples.push_back(comp.sample);
    }
    return samples;
}

}  // namespace lptr::datagen
