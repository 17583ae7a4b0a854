#include "lptr/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lptr/core/error.hpp"
#include "lptr/core/image.hpp"

namespace lptr::trainer {

using dataset::TrainSample;
using datagen::Layout;
using geometry::Homography;
using geometry::Quad;
using geometry::SamplingGrid;

TrainPlan TrainPlan::desk_default(uint64_t seed) {
    TrainPlan plan;
    StagePlan s1;
    s1.index = 1;
    s1.source = DataSource::vertex_crops;
    s1.lr = 1e-3;
    s1.epochs = 30;
    s1.seed = derive_seed(seed, 101);
    s1.frozen_groups = {"rectifier"};
    StagePlan s2;
    s2.index = 2;
    s2.source = DataSource::bbox_crops;
    s2.lr = 1e-3;
    s2.epochs = 30;
    s2.seed = derive_seed(seed, 102);
    s2.frozen_groups = {"backbone", "head", "attention"};
    StagePlan s3;
    s3.index = 3;
    s3.source = DataSource::bbox_crops;
    s3.lr = 5e-4;
    s3.epochs = 20;
    s3.seed = derive_seed(seed, 103);
    plan.stages = {s1, s2, s3};
    return plan;
}

TrainPlan TrainPlan::full_scale(uint64_t seed) {
    TrainPlan plan = desk_default(seed);
    for (StagePlan& s : plan.stages) {
        s.batch_size = 300;
        s.epochs = 200;
    }
    return plan;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows) {
    std::ofstream f(path);
    if (!f) throw IOError("cannot open metrics log: " + path);
    f << "epoch,stage,loss,seq_acc\n";
    for (const EpochMetrics& m : rows)
        f << m.epoch << ',' << m.stage << ',' << m.loss << ',' << m.seq_acc << '\n';
}

// --- Pipeline -----------------------------------------------------------------

Pipeline::Pipeline(ptr::RectifierConfig rcfg, aflnet::RecognizerConfig acfg)
    : rectifier(rcfg), recognizer(acfg) {}

void Pipeline::init(uint64_t seed) {
    rectifier.init(derive_seed(seed, 1));
    recognizer.init(derive_seed(seed, 2));
}

nn::ParamList Pipeline::params() {
    nn::ParamList out = rectifier.params();
    for (nn::Param* p : recognizer.params()) out.push_back(p);
    return out;
}

long Pipeline::param_count() {
    return rectifier.param_count() + recognizer.param_count();
}

std::string Pipeline::config_text() const {
    std::ostringstream os;
    os << "rectifier_mode=" << static_cast<int>(rectifier.cfg.mode) << "\n"
       << "rectifier_in=" << rectifier.cfg.in_h << "x" << rectifier.cfg.in_w << "\n"
       << "rectified=" << rectifier.cfg.out_h << "x" << rectifier.cfg.out_w << "\n"
       << "segments=" << rectifier.cfg.upper_w << "+" << rectifier.cfg.lower_w << "\n"
       << "classes=" << recognizer.cfg.classes << "\n"
       << "attention=" << (recognizer.cfg.use_attention ? 1 : 0) << "\n"
       << "use_rectifier=" << (use_rectifier ? 1 : 0) << "\n";
    return os.str();
}

Tensor Pipeline::rectify_crop(const Tensor& bbox_crop) const {
    if (!use_rectifier)
        return resize_bilinear(bbox_crop, recognizer.cfg.in_h, recognizer.cfg.in_w);
    if (rectifier.cfg.mode == ptr::RectifierMode::double_line)
        return ptr::rectify_double(rectifier, bbox_crop).image;
    return ptr::rectify_single(rectifier, bbox_crop).image;
}

Tensor Pipeline::crop_logits(const Tensor& bbox_crop) const {
    return recognizer.recognize_forward(rectify_crop(bbox_crop));
}

std::string Pipeline::read_crop(const Tensor& bbox_crop, const Charset& cs) const {
    return ctc::greedy_decode(crop_logits(bbox_crop), cs);
}

std::set<std::string> expand_frozen(const nn::ParamList& params,
                                    const std::vector<std::string>& groups) {
    std::set<std::string> out;
    for (const nn::Param* p : params)
        for (const std::string& g : groups)
            if (p->name.rfind(g + ".", 0) == 0 || p->name == g) out.insert(p->name);
    return out;
}

uint64_t params_checksum(const nn::ParamList& params, const std::string& prefix) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const nn::Param* p : params) {
        if (!prefix.empty() && p->name.rfind(prefix, 0) != 0) continue;
        for (double v : p->value.data) {
            uint64_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, 8);
            h ^= bits;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

// --- per-sample step ----------------------------------------------------------

namespace {

struct SampleOutcome {
    double loss = 0.0;
    bool correct = false;
    bool degenerate = false;
};

double loss_with_grad(LossKind kind, const ctc::FocalConfig& focal,
                      const Tensor& logits, const std::vector<int>& label,
                      int blank_id, Tensor* grad) {
    if (kind == LossKind::ctc) return ctc::ctc_loss(logits, label, blank_id, grad);
    return ctc::focal_ctc_loss(logits, label, focal, blank_id, grad);
}

/// Forward + backward for one sample. train_rect / train_rec control which
/// parameter gradients are accumulated; the recognizer input gradient is
/// produced whenever the rectifier is being trained.
SampleOutcome train_sample(const Pipeline& pl, const TrainSample& s,
                           const StagePlan& plan, const ctc::FocalConfig& focal,
                           nn::GradBuffer& gb, bool train_rect, bool train_rec) {
    const aflnet::Recognizer& rec = pl.recognizer;
    const ptr::Rectifier& rect = pl.rectifier;
    const int out_h = rect.cfg.out_h, out_w = rect.cfg.out_w;
    const int blank_id = rec.cfg.classes - 1;
    SampleOutcome out;

    if (plan.source == DataSource::vertex_crops) {
        aflnet::Recognizer::Trace atr = rec.forward(s.vertex_crop);
        Tensor glogits;
        out.loss = loss_with_grad(plan.loss, focal, atr.logits, s.label, blank_id,
                                  train_rec ? &glogits : nullptr);
        out.correct = ctc::collapse(ctc::greedy_ids(atr.logits), blank_id) == s.label;
        if (train_rec) rec.backward(atr, glogits, gb, false);
        return out;
    }

    // bounding-box path, through the rectifier
    Tensor resized = resize_bilinear(s.bbox_crop, rect.cfg.in_h, rect.cfg.in_w);
    ptr::Rectifier::Trace rtr = rect.forward_trace(resized);

    const bool dbl = rect.cfg.mode == ptr::RectifierMode::double_line;
    Quad quad;
    ptr::Hexad hexad;
    Homography h_single, h_up, h_lo;
    try {
        if (dbl) {
            hexad = ptr::vertices_from_offsets_double(rtr.offsets);
            h_up = geometry::solve_homography(ptr::upper_quad(hexad),
                                              geometry::unit_square());
            h_lo = geometry::solve_homography(ptr::lower_quad(hexad),
                                              geometry::unit_square());
        } else {
            quad = ptr::vertices_from_offsets_single(rtr.offsets);
            h_single = geometry::solve_homography(quad, geometry::unit_square());
        }
    } catch (const DegenerateQuad&) {
        out.degenerate = true;
    } catch (const SingularSystem&) {
        out.degenerate = true;
    }
    if (out.degenerate) {
        // identity fallback keeps the step alive; no rectifier gradient
        if (dbl) {
            std::vector<double> zero(12, 0.0);
            hexad = ptr::vertices_from_offsets_double(zero);
            h_up = geometry::solve_homography(ptr::upper_quad(hexad),
                                              geometry::unit_square());
            h_lo = geometry::solve_homography(ptr::lower_quad(hexad),
                                              geometry::unit_square());
        } else {
            quad = geometry::unit_square();
            h_single = Homography::identity();
        }
    }

    Tensor warped;
    SamplingGrid grid_single, grid_up, grid_lo;
    int up_w = rect.cfg.upper_w, lo_w = rect.cfg.lower_w;
    if (dbl) {
        grid_up = geometry::make_grid(h_up, up_w, out_h);
        grid_lo = geometry::make_grid(h_lo, lo_w, out_h);
        warped = hconcat(geometry::bilinear_sample(s.bbox_crop, grid_up),
                         geometry::bilinear_sample(s.bbox_crop, grid_lo));
    } else {
        grid_single = geometry::make_grid(h_single, out_w, out_h);
        warped = geometry::bilinear_sample(s.bbox_crop, grid_single);
    }

    aflnet::Recognizer::Trace atr = rec.forward(warped);
    Tensor glogits;
    bool need_back = train_rec || train_rect;
    out.loss = loss_with_grad(plan.loss, focal, atr.logits, s.label, blank_id,
                              need_back ? &glogits : nullptr);
    out.correct = ctc::collapse(ctc::greedy_ids(atr.logits), blank_id) == s.label;
    if (!need_back) return out;

    bool rect_grad = train_rect && !out.degenerate;
    Tensor gwarped = rec.backward(atr, glogits, gb, rect_grad);
    if (!rect_grad) return out;

    std::vector<double> goffsets;
    if (!dbl) {
        auto ggrid =
            geometry::bilinear_sample_backward(s.bbox_crop, grid_single, gwarped, nullptr);
        auto gtheta = geometry::make_grid_backward(h_single, out_w, out_h, ggrid);
        auto gsrc = geometry::solve_homography_backward(quad, geometry::unit_square(),
                                                        h_single, gtheta);
        goffsets.assign(gsrc.begin(), gsrc.end());
    } else {
        // split the warped-image gradient into the two segments
        Tensor g_up({3, out_h, up_w}), g_lo({3, out_h, lo_w});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < out_h; ++y) {
                for (int x = 0; x < up_w; ++x) g_up.at(c, y, x) = gwarped.at(c, y, x);
                for (int x = 0; x < lo_w; ++x)
                    g_lo.at(c, y, x) = gwarped.at(c, y, up_w + x);
            }
        auto back_quad = [&](const Quad& q, const Homography& h,
                             const SamplingGrid& grid, const Tensor& gout, int w) {
            auto ggrid = geometry::bilinear_sample_backward(s.bbox_crop, grid, gout,
                                                            nullptr);
            auto gtheta = geometry::make_grid_backward(h, w, out_h, ggrid);
            return geometry::solve_homography_backward(q, geometry::unit_square(), h,
                                                       gtheta);
        };
        auto gu = back_quad(ptr::upper_quad(hexad), h_up, grid_up, g_up, up_w);
        auto gl = back_quad(ptr::lower_quad(hexad), h_lo, grid_lo, g_lo, lo_w);
        // upper quad corners = vertices (0,1,3,2); lower = (2,3,5,4)
        std::array<double, 12> gv{};
        const int up_map[4] = {0, 1, 3, 2};
        const int lo_map[4] = {2, 3, 5, 4};
        for (int i = 0; i < 4; ++i) {
            gv[2 * up_map[i]] += gu[2 * i];
            gv[2 * up_map[i] + 1] += gu[2 * i + 1];
            gv[2 * lo_map[i]] += gl[2 * i];
            gv[2 * lo_map[i] + 1] += gl[2 * i + 1];
        }
        goffsets.assign(gv.begin(), gv.end());
    }
    rect.backward(rtr, goffsets, gb);
    return out;
}

}  // namespace

// --- stage driver ----------------------------------------------------------------

StageResult train_stage(Pipeline& pipeline, nn::Adam& adam, const StagePlan& plan,
                        const ctc::FocalConfig& focal,
                        const std::vector<TrainSample>& data, int workers) {
    if (data.empty()) throw MissingInput("training stage got an empty dataset");
    if (workers <= 0) workers = nn::default_workers();

    nn::ParamList params = pipeline.params();
    std::set<std::string> frozen = expand_frozen(params, plan.frozen_groups);
    adam.attach(params);
    adam.lr = plan.lr;

    bool rect_frozen = true, rec_frozen = true;
    for (const nn::Param* p : params) {
        if (frozen.count(p->name)) continue;
        if (p->name.rfind("rectifier.", 0) == 0) rect_frozen = false;
        else rec_frozen = false;
    }
    const bool train_rect =
        !rect_frozen && plan.source == DataSource::bbox_crops && pipeline.use_rectifier;
    const bool train_rec = !rec_frozen;

    std::vector<nn::GradBuffer> buffers;
    buffers.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) buffers.emplace_back(params);

    StageResult result;
    Rng shuffle_rng(derive_seed(plan.seed, 0xe70c));
    std::vector<int> order(data.size());
    for (size_t i = 0; i < data.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        long correct = 0;
        std::atomic<long> degenerate{0};

        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(plan.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(plan.batch_size));
            int n = static_cast<int>(end - start);
            adam.zero_grad(params);
            for (auto& b : buffers) b.zero();

            std::vector<SampleOutcome> outcomes(static_cast<size_t>(n));
            nn::parallel_samples(n, workers, [&](int i, int wkr) {
                const TrainSample& s = data[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
                outcomes[static_cast<size_t>(i)] =
                    train_sample(pipeline, s, plan, focal,
                                 buffers[static_cast<size_t>(wkr)], train_rect, train_rec);
            });

            double batch_loss = 0.0;
            for (const SampleOutcome& o : outcomes) {
                batch_loss += o.loss;
                if (o.correct) ++correct;
                if (o.degenerate) ++degenerate;
            }
            if (!std::isfinite(batch_loss))
                throw DivergenceGuard("non-finite loss in stage " +
                                      std::to_string(plan.index) + ", epoch " +
                                      std::to_string(epoch));
            loss_sum += batch_loss;

            for (auto& b : buffers) b.fold_into_params();
            double scale = 1.0 / n;
            for (nn::Param* p : params) p->grad *= scale;
            adam.step(params, frozen);
        }

        EpochMetrics m;
        m.stage = plan.index;
        m.epoch = epoch;
        m.loss = loss_sum / static_cast<double>(data.size());
        m.seq_acc = static_cast<double>(correct) / static_cast<double>(data.size());
        result.epochs.push_back(m);
        result.degenerate_quads += degenerate.load();
    }
    return result;
}

FullTrainResult train_full(Pipeline& pipeline, const TrainPlan& plan,
                           const std::vector<TrainSample>& data, const Charset& cs,
                           const std::string& checkpoint_dir) {
    FullTrainResult result;
    nn::Adam adam;
    for (const StagePlan& stage : plan.stages) {
        StageResult sr = train_stage(pipeline, adam, stage, plan.focal, data,
                                     plan.workers);
        result.metrics.insert(result.metrics.end(), sr.epochs.begin(), sr.epochs.end());
        if (!checkpoint_dir.empty()) {
            std::filesystem::create_directories(checkpoint_dir);
            std::string path =
                checkpoint_dir + "/stage" + std::to_string(stage.index) + ".ckpt";
            save_checkpoint(path, snapshot(pipeline, cs, stage.index, &adam));
            result.checkpoint_paths.push_back(path);
        }
    }
    return result;
}

// --- probes -----------------------------------------------------------------------

double sequence_accuracy(const Pipeline& pipeline,
                         const std::vector<TrainSample>& data, const Charset& cs,
                         DataSource source, int workers) {
    if (data.empty()) throw EmptyEvalSet("no samples to evaluate");
    if (workers <= 0) workers = nn::default_workers();
    std::vector<char> ok(data.size(), 0);
    nn::parallel_samples(static_cast<int>(data.size()), workers, [&](int i, int) {
        const TrainSample& s = data[static_cast<size_t>(i)];
        Tensor logits = source == DataSource::vertex_crops
                            ? pipeline.recognizer.recognize_forward(s.vertex_crop)
                            : pipeline.crop_logits(s.bbox_crop);
        ok[static_cast<size_t>(i)] =
            ctc::collapse(ctc::greedy_ids(logits), cs.blank_id()) == s.label ? 1 : 0;
    });
    long correct = 0;
    for (char c : ok) correct += c;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double mean_corner_error(const Pipeline& pipeline,
                         const std::vector<TrainSample>& data, int workers) {
    if (data.empty()) throw EmptyEvalSet("no samples to evaluate");
    if (workers <= 0) workers = nn::default_workers();
    std::vector<double> errs(data.size(), 0.0);
    const ptr::Rectifier& rect = pipeline.rectifier;
    nn::parallel_samples(static_cast<int>(data.size()), workers, [&](int i, int) {
        const TrainSample& s = data[static_cast<size_t>(i)];
        Tensor resized = resize_bilinear(s.bbox_crop, rect.cfg.in_h, rect.cfg.in_w);
        std::vector<double> off = rect.estimate_offsets(resized);
        double e = 0.0;
        if (rect.cfg.mode == ptr::RectifierMode::double_line) {
            static const geometry::Point2 anchors[6] = {{0, 0}, {1, 0}, {0, 0.5},
                                                        {1, 0.5}, {0, 1}, {1, 1}};
            for (int k = 0; k < 6; ++k) {
                double px = anchors[k].x + off[static_cast<size_t>(2 * k)];
                double py = anchors[k].y + off[static_cast<size_t>(2 * k + 1)];
                double dx = px - s.gt_hexad.vertices[static_cast<size_t>(k)].x;
                double dy = py - s.gt_hexad.vertices[static_cast<size_t>(k)].y;
                e += std::sqrt(dx * dx + dy * dy);
            }
            e /= 6.0;
        } else {
            static const geometry::Point2 anchors[4] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
            for (int k = 0; k < 4; ++k) {
                double px = anchors[k].x + off[static_cast<size_t>(2 * k)];
                double py = anchors[k].y + off[static_cast<size_t>(2 * k + 1)];
                double dx = px - s.gt_quad.corners[static_cast<size_t>(k)].x;
                double dy = py - s.gt_quad.corners[static_cast<size_t>(k)].y;
                e += std::sqrt(dx * dx + dy * dy);
            }
            e /= 4.0;
        }
        errs[static_cast<size_t>(i)] = e;
    });
    double sum = 0.0;
    for (double e : errs) sum += e;
    return sum / static_cast<double>(data.size());
}

Checkpoint snapshot(Pipeline& pipeline, const Charset& cs, int stage,
                    const nn::Adam* adam) {
    Rng rng(0);
    return make_checkpoint(pipeline.params(), cs.hash(), stage, rng.serialize(),
                           pipeline.config_text(), adam);
}

void restore(Pipeline& pipeline, const Checkpoint& ckpt, const Charset& cs,
             nn::Adam* adam) {
    apply_checkpoint(ckpt, pipeline.params(), cs.hash(), adam);
}

Pipeline pipeline_from_config_text(const std::string& config_text) {
    std::unordered_map<std::string, std::string> kv;
    std::istringstream is(config_text);
    std::string line;
    while (std::getline(is, line)) {
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get_int = [&](const std::string& key, int fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stoi(it->second);
    };
    auto get_pair = [&](const std::string& key, char sep, int& a, int& b) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        size_t p = it->second.find(sep);
        if (p == std::string::npos) return;
        a = std::stoi(it->second.substr(0, p));
        b = std::stoi(it->second.substr(p + 1));
    };
    ptr::RectifierConfig rcfg;
    rcfg.mode = static_cast<ptr::RectifierMode>(get_int("rectifier_mode", 0));
    get_pair("rectifier_in", 'x', rcfg.in_h, rcfg.in_w);
    get_pair("rectified", 'x', rcfg.out_h, rcfg.out_w);
    get_pair("segments", '+', rcfg.upper_w, rcfg.lower_w);
    aflnet::RecognizerConfig acfg;
    acfg.in_h = rcfg.out_h;
    acfg.in_w = rcfg.out_w;
    acfg.classes = get_int("classes", 73);
    acfg.use_attention = get_int("attention", 1) != 0;
    Pipeline pl(rcfg, acfg);
    pl.use_rectifier = get_int("use_rectifier", 1) != 0;
    return pl;
}

}  // namespace lptr::trainer
