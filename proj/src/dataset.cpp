#include "lptr/dataset.hpp"

#include <cmath>

#include "lptr/core/error.hpp"
#include "lptr/core/image.hpp"

namespace lptr::dataset {

using datagen::Layout;
using geometry::Point2;
using geometry::Quad;

Tensor rectify_with_quad(const Tensor& image, const Quad& quad_norm, int out_h,
                         int out_w) {
    geometry::Homography h =
        geometry::solve_homography(quad_norm, geometry::unit_square());
    return geometry::warp(image, h, out_w, out_h);
}

Tensor rectify_with_hexad(const Tensor& image, const ptr::Hexad& hexad_norm,
                          int out_h, int upper_w, int lower_w) {
    Tensor up = rectify_with_quad(image, ptr::upper_quad(hexad_norm), out_h, upper_w);
    Tensor lo = rectify_with_quad(image, ptr::lower_quad(hexad_norm), out_h, lower_w);
    return hconcat(up, lo);
}

Tensor crop_bbox_region(const Tensor& scene, const std::array<double, 4>& bbox,
                        int out_h, int out_w) {
    const double W = image_width(scene), H = image_height(scene);
    Quad q{{Point2{bbox[0] / W, bbox[1] / H}, Point2{bbox[2] / W, bbox[1] / H},
            Point2{bbox[2] / W, bbox[3] / H}, Point2{bbox[0] / W, bbox[3] / H}}};
    return rectify_with_quad(scene, q, out_h, out_w);
}

TrainSample sample_from_scene(const Tensor& scene, const datagen::PlateSample& meta,
                              const Charset& cs, int crop_h, int crop_w, int rect_h,
                              int rect_w, int upper_w, int lower_w) {
    TrainSample s;
    s.layout = meta.layout;
    s.plate = meta.plate;
    s.label = cs.encode(meta.plate);
    s.bbox_crop = crop_bbox_region(scene, meta.bbox, crop_h, crop_w);

    const double bw = meta.bbox[2] - meta.bbox[0];
    const double bh = meta.bbox[3] - meta.bbox[1];
    auto to_crop = [&](const Point2& p) {
        return Point2{(p.x - meta.bbox[0]) / bw, (p.y - meta.bbox[1]) / bh};
    };
    const double W = image_width(scene), H = image_height(scene);
    auto to_scene_norm = [&](const Point2& p) { return Point2{p.x / W, p.y / H}; };

    if (meta.layout == Layout::single_line) {
        for (int k = 0; k < 4; ++k)
            s.gt_quad.corners[k] = to_crop(meta.vertices[static_cast<size_t>(k)]);
        Quad scene_quad;
        for (int k = 0; k < 4; ++k)
            scene_quad.corners[k] = to_scene_norm(meta.vertices[static_cast<size_t>(k)]);
        s.vertex_crop = rectify_with_quad(scene, scene_quad, rect_h, rect_w);
    } else {
        for (int k = 0; k < 6; ++k)
            s.gt_hexad.vertices[k] = to_crop(meta.vertices[static_cast<size_t>(k)]);
        for (int k = 0; k < 4; ++k)
            s.gt_quad.corners[k] = ptr::upper_quad(s.gt_hexad).corners[k];
        ptr::Hexad scene_hexad;
        for (int k = 0; k < 6; ++k)
            scene_hexad.vertices[k] = to_scene_norm(meta.vertices[static_cast<size_t>(k)]);
        s.vertex_crop = rectify_with_hexad(scene, scene_hexad, rect_h, upper_w, lower_w);
    }
    return s;
}

namespace {

std::vector<Point2> place_plate(Rng& rng, const CropConfig& cfg, double aspect) {
    const double W = cfg.crop_w, H = cfg.crop_h;
    (void)aspect;  // the quad absorbs the template aspect; the crop defines extents
    double rot_scale = 1.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
        if (attempt > 0 && attempt % 15 == 0) rot_scale *= 0.5;
        double ml = rng.uniform(cfg.margin_min, cfg.margin_max) * W;
        double mr = rng.uniform(cfg.margin_min, cfg.margin_max) * W;
        double mt = rng.uniform(cfg.margin_min, cfg.margin_max) * H;
        double mb = rng.uniform(cfg.margin_min, cfg.margin_max) * H;
        double x1 = ml, x2 = W - mr, y1 = mt, y2 = H - mb;
        double cx = 0.5 * (x1 + x2), cy = 0.5 * (y1 + y2);
        double pw = x2 - x1, ph = y2 - y1;
        double ang = rng.uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg) *
                     rot_scale * M_PI / 180.0;
        double ca = std::cos(ang), sa = std::sin(ang);
        Point2 base[4] = {{-pw / 2, -ph / 2},
                          {pw / 2, -ph / 2},
                          {pw / 2, ph / 2},
                          {-pw / 2, ph / 2}};
        std::vector<Point2> cand;
        bool ok = true;
        for (const Point2& b : base) {
            double jx = rng.uniform(-cfg.perspective, cfg.perspective) * pw;
            double jy = rng.uniform(-cfg.perspective, cfg.perspective) * ph;
            Point2 p{cx + b.x * ca - b.y * sa + jx, cy + b.x * sa + b.y * ca + jy};
            if (p.x < 0.5 || p.x > W - 0.5 || p.y < 0.5 || p.y > H - 0.5) ok = false;
            cand.push_back(p);
        }
        if (!ok) continue;
        Quad qn;
        for (int i = 0; i < 4; ++i)
            qn.corners[i] = Point2{cand[static_cast<size_t>(i)].x / W,
                                   cand[static_cast<size_t>(i)].y / H};
        if (!geometry::is_strictly_convex(qn, 1e-6)) continue;
        return cand;
    }
    // axis-aligned fallback
    double m = cfg.margin_min * W;
    return {Point2{m, m}, Point2{W - m, m}, Point2{W - m, H - m}, Point2{m, H - m}};
}

}  // namespace

std::vector<TrainSample> build_crop_dataset(const CropConfig& cfg, const Charset& cs,
                                            const datagen::GlyphLibrary& fonts) {
    std::vector<TrainSample> out;
    out.reserve(static_cast<size_t>(cfg.count));
    for (int i = 0; i < cfg.count; ++i) {
        uint64_t sseed = derive_seed(cfg.seed, static_cast<uint64_t>(i));
        Rng rng(sseed);

        int province = cfg.province_id;
        if (!cfg.province_pool.empty())
            province = cfg.province_pool[rng.below(cfg.province_pool.size())];

        datagen::PlateSpec spec;
        spec.layout = cfg.layout;
        spec.glyphs = datagen::random_plate_string(rng, cs, province);
        datagen::RenderedPlate plate = datagen::render_plate(spec, fonts, sseed);

        double aspect = static_cast<double>(image_width(plate.image)) /
                        image_height(plate.image);
        std::vector<Point2> outer = place_plate(rng, cfg, aspect);
        std::vector<Point2> verts = datagen::project_template_vertices(plate, outer);

        Tensor bg = datagen::make_background(cfg.crop_h, cfg.crop_w, sseed);
        datagen::CompositeResult comp =
            datagen::composite(plate, bg, verts, spec.glyphs, cfg.layout, sseed);
        Tensor scene = std::move(comp.scene);
        if (rng.uniform() < cfg.blur_prob) {
            datagen::BlurKind kind = rng.uniform() < 0.5 ? datagen::BlurKind::motion
                                                         : datagen::BlurKind::defocus;
            scene = datagen::augment_blur(scene, kind, rng.uniform(0.3, cfg.blur_max),
                                          sseed);
        }

        TrainSample s;
        s.layout = cfg.layout;
        s.plate = spec.glyphs;
        s.label = cs.encode(spec.glyphs);
        s.bbox_crop = std::move(scene);

        const double W = cfg.crop_w, H = cfg.crop_h;
        auto noisy = [&](const Point2& p) {
            return Point2{(p.x + rng.gaussian(0.0, cfg.vertex_sigma)) / W,
                          (p.y + rng.gaussian(0.0, cfg.vertex_sigma)) / H};
        };
        if (cfg.layout == Layout::single_line) {
            for (int k = 0; k < 4; ++k)
                s.gt_quad.corners[k] = Point2{verts[static_cast<size_t>(k)].x / W,
                                              verts[static_cast<size_t>(k)].y / H};
            Quad q;
            for (int k = 0; k < 4; ++k) q.corners[k] = noisy(verts[static_cast<size_t>(k)]);
            if (!geometry::is_strictly_convex(q)) q = s.gt_quad;
            s.vertex_crop = rectify_with_quad(s.bbox_crop, q, cfg.rect_h, cfg.rect_w);
        } else {
            for (int k = 0; k < 6; ++k)
                s.gt_hexad.vertices[k] = Point2{verts[static_cast<size_t>(k)].x / W,
                                                verts[static_cast<size_t>(k)].y / H};
            for (int k = 0; k < 4; ++k)
                s.gt_quad.corners[k] =
                    ptr::upper_quad(s.gt_hexad).corners[k];  // convenience
            ptr::Hexad hx;
            for (int k = 0; k < 6; ++k) hx.vertices[k] = noisy(verts[static_cast<size_t>(k)]);
            if (!geometry::is_strictly_convex(ptr::upper_quad(hx)) ||
                !geometry::is_strictly_convex(ptr::lower_quad(hx)))
                hx = s.gt_hexad;
            s.vertex_crop = rectify_with_hexad(s.bbox_crop, hx, cfg.rect_h,
                                               cfg.upper_w, cfg.lower_w);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lptr::dataset
