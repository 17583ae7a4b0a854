#include "lptr/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lptr/core/image.hpp"
#include "test_util.hpp"

using namespace lptr;
using namespace lptr::trainer;
using lptr::testutil::fd;

namespace {

Charset the_charset = Charset::builtin();
datagen::GlyphLibrary the_fonts;

std::vector<dataset::TrainSample> tiny_dataset(int count, uint64_t seed) {
    dataset::CropConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    cfg.perspective = 0.05;
    cfg.rotate_max_deg = 5;
    cfg.blur_prob = 0.0;
    return dataset::build_crop_dataset(cfg, the_charset, the_fonts);
}

StagePlan quick_stage(int index, DataSource source,
                      std::vector<std::string> frozen, int epochs) {
    StagePlan s;
    s.index = index;
    s.source = source;
    s.loss = LossKind::focal_ctc;
    s.lr = 1e-3;
    s.epochs = epochs;
    s.batch_size = 4;
    s.seed = 11;
    s.frozen_groups = std::move(frozen);
    return s;
}

}  // namespace

TEST(Freezing, Stage2LeavesRecognizerBytesUntouched) {
    Pipeline pl;
    pl.init(3);
    std::vector<dataset::TrainSample> data = tiny_dataset(8, 21);

    uint64_t rec_before = params_checksum(pl.params(), "backbone.");
    uint64_t head_before = params_checksum(pl.params(), "head.");
    uint64_t att_before = params_checksum(pl.params(), "attention.");
    uint64_t rect_before = params_checksum(pl.params(), "rectifier.");

    nn::Adam adam;
    StagePlan s2 = quick_stage(2, DataSource::bbox_crops,
                               {"backbone", "head", "attention"}, 2);
    ctc::FocalConfig focal;
    train_stage(pl, adam, s2, focal, data, 2);

    EXPECT_EQ(params_checksum(pl.params(), "backbone."), rec_before);
    EXPECT_EQ(params_checksum(pl.params(), "head."), head_before);
    EXPECT_EQ(params_checksum(pl.params(), "attention."), att_before);
    EXPECT_NE(params_checksum(pl.params(), "rectifier."), rect_before);
}

TEST(Freezing, Stage1LeavesRectifierBytesUntouched) {
    Pipeline pl;
    pl.init(5);
    std::vector<dataset::TrainSample> data = tiny_dataset(8, 23);
    uint64_t rect_before = params_checksum(pl.params(), "rectifier.");
    uint64_t rec_before = params_checksum(pl.params(), "backbone.");

    nn::Adam adam;
    StagePlan s1 = quick_stage(1, DataSource::vertex_crops, {"rectifier"}, 2);
    ctc::FocalConfig focal;
    train_stage(pl, adam, s1, focal, data, 2);

    EXPECT_EQ(params_checksum(pl.params(), "rectifier."), rect_before);
    EXPECT_NE(params_checksum(pl.params(), "backbone."), rec_before);
}

TEST(Determinism, IdenticalSeedsGiveIdenticalLossCurves) {
    std::vector<dataset::TrainSample> data = tiny_dataset(8, 29);
    auto run = [&]() {
        Pipeline pl;
        pl.init(7);
        nn::Adam adam;
        StagePlan s1 = quick_stage(1, DataSource::vertex_crops, {"rectifier"}, 3);
        ctc::FocalConfig focal;
        StageResult r = train_stage(pl, adam, s1, focal, data, 2);
        std::vector<double> losses;
        for (const auto& m : r.epochs) losses.push_back(m.loss);
        losses.push_back(static_cast<double>(params_checksum(pl.params())));
        return losses;
    };
    EXPECT_EQ(run(), run());
}

TEST(TrainFull, ZeroEpochStagesEmitCheckpointChain) {
    testutil::TempDir dir("ckpts");
    Pipeline pl;
    pl.init(9);
    uint64_t before = params_checksum(pl.params());

    TrainPlan plan = TrainPlan::desk_default(1);
    for (auto& s : plan.stages) s.epochs = 0;
    std::vector<dataset::TrainSample> data = tiny_dataset(4, 31);
    FullTrainResult res = train_full(pl, plan, data, the_charset, dir.str());

    EXPECT_EQ(params_checksum(pl.params()), before);
    ASSERT_EQ(res.checkpoint_paths.size(), 3u);
    for (const std::string& p : res.checkpoint_paths)
        EXPECT_TRUE(std::filesystem::exists(p));
    Checkpoint last = load_checkpoint(res.checkpoint_paths.back());
    EXPECT_EQ(last.stage, 3);
}

TEST(Checkpoint, SaveLoadForwardIsBitwise) {
    testutil::TempDir dir("ckpt_rt");
    Pipeline pl;
    pl.init(11);
    std::vector<dataset::TrainSample> data = tiny_dataset(3, 37);

    std::vector<Tensor> before;
    for (const auto& s : data) before.push_back(pl.crop_logits(s.bbox_crop));

    std::string path = dir.str() + "/model.ckpt";
    save_checkpoint(path, snapshot(pl, the_charset, 1));

    Pipeline other;
    other.init(999);  // different weights until restored
    restore(other, load_checkpoint(path), the_charset);
    for (size_t i = 0; i < data.size(); ++i) {
        Tensor after = other.crop_logits(data[i].bbox_crop);
        EXPECT_EQ(after.data, before[i].data);  // bitwise
    }
}

TEST(Checkpoint, CharsetMismatchRejected) {
    testutil::TempDir dir("ckpt_cs");
    Pipeline pl;
    pl.init(13);
    std::string path = dir.str() + "/model.ckpt";
    save_checkpoint(path, snapshot(pl, the_charset, 1));

    Charset altered = the_charset;
    {
        // swap two symbols in a copy on disk and reload
        std::string cpath = dir.str() + "/charset.txt";
        the_charset.save(cpath);
        std::ifstream in(cpath);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        in.close();
        size_t pos = text.find('A');
        text[pos] = 'B';
        text[text.find('B', pos + 1)] = 'A';
        std::ofstream out(cpath);
        out << text;
        out.close();
        altered = Charset::load(cpath);
    }
    Pipeline other;
    EXPECT_THROW(restore(other, load_checkpoint(path), altered), CharsetMismatch);
}

TEST(Checkpoint, TruncatedFileIsCorrupt) {
    testutil::TempDir dir("ckpt_tr");
    Pipeline pl;
    pl.init(17);
    std::string path = dir.str() + "/model.ckpt";
    save_checkpoint(path, snapshot(pl, the_charset, 2));

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::string truncated_path = dir.str() + "/trunc.ckpt";
    std::ofstream out(truncated_path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    EXPECT_THROW(load_checkpoint(truncated_path), CorruptFile);

    // flipped payload byte fails the CRC
    std::string flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;
    std::string flipped_path = dir.str() + "/flip.ckpt";
    std::ofstream fout(flipped_path, std::ios::binary);
    fout.write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
    fout.close();
    EXPECT_THROW(load_checkpoint(flipped_path), CorruptFile);
}

TEST(Checkpoint, VersionMismatchRejected) {
    testutil::TempDir dir("ckpt_v");
    Pipeline pl;
    pl.init(19);
    Checkpoint ckpt = snapshot(pl, the_charset, 1);
    ckpt.version = 42;
    std::string path = dir.str() + "/future.ckpt";
    save_checkpoint(path, ckpt);
    EXPECT_THROW(load_checkpoint(path), VersionMismatch);
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
    testutil::TempDir dir("ckpt_opt");
    Pipeline pl;
    pl.init(23);
    std::vector<dataset::TrainSample> data = tiny_dataset(4, 41);
    nn::Adam adam;
    StagePlan s1 = quick_stage(1, DataSource::vertex_crops, {"rectifier"}, 1);
    ctc::FocalConfig focal;
    train_stage(pl, adam, s1, focal, data, 1);

    std::string path = dir.str() + "/opt.ckpt";
    save_checkpoint(path, snapshot(pl, the_charset, 1, &adam));
    Checkpoint back = load_checkpoint(path);
    EXPECT_TRUE(back.has_optimizer);
    EXPECT_EQ(back.adam_t, adam.t);
    EXPECT_FALSE(back.adam_m.empty());
}

TEST(Divergence, NonFiniteLossAborts) {
    Pipeline pl;
    pl.init(29);
    pl.recognizer.head.b.value.data[0] = std::numeric_limits<double>::quiet_NaN();
    std::vector<dataset::TrainSample> data = tiny_dataset(4, 43);
    nn::Adam adam;
    StagePlan s1 = quick_stage(1, DataSource::vertex_crops, {"rectifier"}, 1);
    ctc::FocalConfig focal;
    EXPECT_THROW(train_stage(pl, adam, s1, focal, data, 1), DivergenceGuard);
}

TEST(Differentiability, RecognitionLossReachesRectifierParams) {
    // weak supervision path: loss gradient w.r.t. rectifier parameters on a
    // misrectified sample is nonzero and matches finite differences
    Pipeline pl;
    pl.init(31);
    // a slightly trained rectifier head so offsets are off-identity
    Rng rng(33);
    for (auto& v : pl.rectifier.f3.w.value.data) v = rng.uniform(-0.02, 0.02);
    std::vector<dataset::TrainSample> data = tiny_dataset(1, 47);
    const dataset::TrainSample& s = data[0];
    ctc::FocalConfig focal;

    auto loss_value = [&]() {
        Tensor warped = pl.rectify_crop(s.bbox_crop);
        Tensor logits = pl.recognizer.recognize_forward(warped);
        return ctc::ctc_loss(logits, s.label, the_charset.blank_id());
    };

    // analytic gradient through warp -> homography -> offsets -> regressor
    nn::ParamList params = pl.params();
    nn::GradBuffer gb(params);
    Tensor resized = resize_bilinear(s.bbox_crop, 64, 128);
    ptr::Rectifier::Trace rtr = pl.rectifier.forward_trace(resized);
    geometry::Quad quad = ptr::vertices_from_offsets_single(rtr.offsets);
    geometry::Homography h =
        geometry::solve_homography(quad, geometry::unit_square());
    geometry::SamplingGrid grid = geometry::make_grid(h, 94, 24);
    Tensor warped = geometry::bilinear_sample(s.bbox_crop, grid);
    aflnet::Recognizer::Trace atr = pl.recognizer.forward(warped);
    Tensor glogits;
    ctc::ctc_loss(atr.logits, s.label, the_charset.blank_id(), &glogits);
    Tensor gwarped = pl.recognizer.backward(atr, glogits, gb, true);
    auto ggrid = geometry::bilinear_sample_backward(s.bbox_crop, grid, gwarped, nullptr);
    auto gtheta = geometry::make_grid_backward(h, 94, 24, ggrid);
    auto gsrc = geometry::solve_homography_backward(quad, geometry::unit_square(), h,
                                                    gtheta);
    std::vector<double> goff(gsrc.begin(), gsrc.end());
    pl.rectifier.backward(rtr, goff, gb);

    Rng pick(51);
    double worst = 0.0;
    double grad_norm = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        nn::Param& p = trial % 2 ? pl.rectifier.f2.w : pl.rectifier.f3.w;
        size_t idx = static_cast<size_t>(pick.below(static_cast<uint64_t>(p.value.numel())));
        double analytic = gb.grad(p).data[idx];
        double numeric = fd(loss_value, &p.value.data[idx], 1e-5);
        grad_norm += analytic * analytic;
        double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
    EXPECT_GT(grad_norm, 0.0);
    EXPECT_LT(worst, 1e-2);
}

TEST(Probes, CornerErrorAndSequenceAccuracyRun) {
    Pipeline pl;
    pl.init(37);
    std::vector<dataset::TrainSample> data = tiny_dataset(6, 53);
    double err = mean_corner_error(pl, data, 2);
    EXPECT_GT(err, 0.0);  // identity rectifier vs inset plates
    EXPECT_LT(err, 0.5);
    double acc = sequence_accuracy(pl, data, the_charset, DataSource::vertex_crops, 2);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
}

TEST(MetricsCsv, WritesHeaderAndRows) {
    testutil::TempDir dir("metrics");
    std::vector<EpochMetrics> rows = {{1, 0, 2.5, 0.1}, {1, 1, 1.5, 0.4}};
    std::string path = dir.str() + "/log.csv";
    write_metrics_csv(path, rows);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    EXPECT_EQ(line, "epoch,stage,loss,seq_acc");
    std::getline(f, line);
    EXPECT_EQ(line, "0,1,2.5,0.1");
}
