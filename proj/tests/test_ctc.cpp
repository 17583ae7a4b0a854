#include "lptr/ctc.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "lptr/core/error.hpp"
#include "test_util.hpp"

using namespace lptr;
using namespace lptr::ctc;
using lptr::testutil::fd;
using lptr::testutil::grad_rel_err;
using lptr::testutil::rel_err;

namespace {

Tensor uniform_logits(int k, int t) { return Tensor({k, t}); }

Tensor random_logits(int k, int t, Rng& rng, double scale = 2.0) {
    Tensor l({k, t});
    for (auto& v : l.data) v = rng.uniform(-scale, scale);
    return l;
}

/// Logits putting (numerically exact) probability 1 on the given per-frame ids.
Tensor one_hot_logits(int k, const std::vector<int>& frame_ids) {
    Tensor l({k, static_cast<int>(frame_ids.size())});
    l.fill(-2000.0);
    for (size_t t = 0; t < frame_ids.size(); ++t)
        l.at(frame_ids[t], static_cast<int>(t)) = 0.0;
    return l;
}

}  // namespace

TEST(Charset, BuiltinLayout) {
    Charset cs = Charset::builtin();
    EXPECT_EQ(cs.size(), 73);
    EXPECT_EQ(cs.blank_id(), 72);
    EXPECT_EQ(cs.glyph(72), "-");
    EXPECT_EQ(cs.id("A"), 48);
    EXPECT_EQ(cs.id("0"), 38);
    EXPECT_EQ(cs.id("9"), 47);
    EXPECT_EQ(cs.id("Z"), 71);
    EXPECT_EQ(cs.id("皖"), 11);  // a province glyph in 0..30
    // letters exclude I and O
    for (int id = 48; id <= 71; ++id) {
        EXPECT_NE(cs.glyph(id), "I");
        EXPECT_NE(cs.glyph(id), "O");
    }
}

TEST(Charset, EncodeDecodeRoundTrip) {
    Charset cs = Charset::builtin();
    std::string plate = "皖A12345";
    std::vector<int> ids = cs.encode(plate);
    EXPECT_EQ(ids.size(), 7u);
    EXPECT_EQ(cs.decode_ids(ids), plate);
    // every non-blank symbol round-trips
    for (int id = 0; id < cs.blank_id(); ++id) {
        std::vector<int> got = cs.encode(cs.glyph(id));
        ASSERT_EQ(got.size(), 1u);
        EXPECT_EQ(got[0], id);
    }
    EXPECT_THROW(cs.encode("Ξ"), UnknownGlyph);
    EXPECT_THROW(cs.encode("-"), UnknownGlyph);
}

TEST(Charset, SaveLoadPreservesHash) {
    testutil::TempDir dir("charset");
    Charset cs = Charset::builtin();
    cs.save(dir.str() + "/charset.txt");
    Charset loaded = Charset::load(dir.str() + "/charset.txt");
    EXPECT_EQ(loaded.size(), cs.size());
    EXPECT_EQ(loaded.hash(), cs.hash());
    EXPECT_EQ(loaded.id("A"), 48);
}

TEST(CtcLoss, UniformTwoFrameAnalytic) {
    // alphabet {a, b, blank}, uniform softmax, target "a":
    // paths aa, a-, -a out of 3^2 -> p = 3/9
    Tensor logits = uniform_logits(3, 2);
    double loss = ctc_loss(logits, {0}, 2);
    EXPECT_NEAR(loss, -std::log(1.0 / 3.0), 1e-12);
    double brute = ctc_bruteforce(logits, {0}, 2);
    EXPECT_NEAR(brute, loss, 1e-12);
}

TEST(CtcLoss, PerfectAlignmentZeroLoss) {
    Charset cs = Charset::builtin();
    std::vector<int> target = cs.encode("皖A12345");
    std::vector<int> frames;
    for (int id : target) {
        frames.push_back(id);
        frames.push_back(cs.blank_id());
    }
    Tensor logits = one_hot_logits(73, frames);
    EXPECT_NEAR(ctc_loss(logits, target, cs.blank_id()), 0.0, 1e-9);
}

TEST(CtcLoss, MatchesBruteForce) {
    Rng rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        int k = 2 + static_cast<int>(rng.below(3));  // 2..4 classes incl. blank
        int t = 1 + static_cast<int>(rng.below(6));  // 1..6 frames
        int blank = k - 1;
        int len = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(t)));
        std::vector<int> target;
        for (int i = 0; i < len; ++i) target.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(blank))));
        Tensor logits = random_logits(k, t, rng);
        double want;
        try {
            want = ctc_bruteforce(logits, target, blank);
        } catch (const InfeasibleTarget&) {
            EXPECT_THROW(ctc_loss(logits, target, blank), InfeasibleTarget);
            continue;
        }
        double got = ctc_loss(logits, target, blank);
        EXPECT_LT(rel_err(got, want), 1e-6);
    }
}

TEST(CtcLoss, InfeasibleTargetThrows) {
    Tensor logits = uniform_logits(3, 2);
    EXPECT_THROW(ctc_loss(logits, {0, 1, 0}, 2), InfeasibleTarget);
    EXPECT_THROW(ctc_bruteforce(logits, {0, 1, 0}, 2), InfeasibleTarget);
    // repeats need a separating blank: "aa" needs 3 frames
    EXPECT_THROW(ctc_loss(logits, {0, 0}, 2), InfeasibleTarget);
}

TEST(CtcBruteforce, TooLargeGuard) {
    Tensor logits = uniform_logits(10, 8);  // 10^8 paths
    EXPECT_THROW(ctc_bruteforce(logits, {0}, 9), TooLarge);
}

TEST(GreedyDecode, IdSemantics) {
    Charset cs = Charset::builtin();
    EXPECT_EQ(greedy_decode(one_hot_logits(73, {48, 72, 38}), cs), "A0");
    EXPECT_EQ(greedy_decode(one_hot_logits(73, {72, 72, 72}), cs), "");
    EXPECT_EQ(greedy_decode(one_hot_logits(73, {48, 48, 72, 48}), cs), "AA");
}

TEST(GreedyDecode, InvariantUnderMonotoneTransform) {
    Rng rng(55);
    Charset cs = Charset::builtin();
    Tensor logits = random_logits(73, 18, rng);
    std::string base = greedy_decode(logits, cs);
    Tensor scaled = logits;
    for (auto& v : scaled.data) v = 2.0 * v + 1.0;
    EXPECT_EQ(greedy_decode(scaled, cs), base);
    Tensor exped = logits;
    for (auto& v : exped.data) v = std::exp(v);
    EXPECT_EQ(greedy_decode(exped, cs), base);
}

TEST(PlateProbability, OneHotAndUniform) {
    FocalConfig cfg;
    Tensor hot = one_hot_logits(3, {0, 1});
    EXPECT_DOUBLE_EQ(plate_probability(hot, cfg, 2), 1.0);

    Tensor uni = uniform_logits(3, 2);
    EXPECT_NEAR(plate_probability(uni, cfg, 2), 1.0 / 9.0, 1e-12);
}

TEST(PlateProbability, MonotoneInArgmaxProbability) {
    FocalConfig cfg;
    Rng rng(77);
    Tensor logits = random_logits(4, 3, rng);
    double before = plate_probability(logits, cfg, 3);
    // raise an argmax logit: p must not decrease
    std::vector<int> ids = greedy_ids(logits);
    logits.at(ids[1], 1) += 0.5;
    EXPECT_GE(plate_probability(logits, cfg, 3), before);
}

TEST(PlateProbability, ExpNegCtcMode) {
    FocalConfig cfg;
    cfg.p_mode = FocalConfig::PMode::exp_neg_ctc;
    Rng rng(78);
    Tensor logits = random_logits(4, 5, rng);
    std::vector<int> decoded = collapse(greedy_ids(logits), 3);
    double p = plate_probability(logits, cfg, 3);
    if (!decoded.empty()) {
        EXPECT_NEAR(p, std::exp(-ctc_loss(logits, decoded, 3)), 1e-12);
    } else {
        EXPECT_LE(p, 1.0);
    }
}

TEST(FocalCtc, ReductionToPlainCtc) {
    FocalConfig cfg;
    cfg.alpha = 1.0;
    cfg.gamma = 0.0;
    Rng rng(91);
    for (int i = 0; i < 20; ++i) {
        Tensor logits = random_logits(4, 6, rng);
        std::vector<int> target = {static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
        double plain = ctc_loss(logits, target, 3);
        double focal = focal_ctc_loss(logits, target, cfg, 3);
        EXPECT_NEAR(focal, plain, 1e-12);
    }
}

TEST(FocalCtc, WeightArithmetic) {
    FocalConfig cfg;  // alpha 0.5, gamma 2.0
    EXPECT_DOUBLE_EQ(focal_weight(0.5, cfg), 0.125);
    EXPECT_DOUBLE_EQ(focal_weight(1.0, cfg), 0.0);
    Rng rng(93);
    for (int i = 0; i < 50; ++i) {
        double p = rng.uniform(0.0, 1.0);
        double w = focal_weight(p, cfg);
        EXPECT_GE(w, 0.0);
        EXPECT_LE(w, cfg.alpha);
    }
    FocalConfig bad;
    bad.alpha = 0.0;
    EXPECT_THROW(focal_weight(0.5, bad), ConfigError);
}

TEST(FocalCtc, VanishesAsConfidenceApproachesOne) {
    FocalConfig cfg;
    Charset cs = Charset::builtin();
    std::vector<int> target = {48};
    Tensor logits = one_hot_logits(73, {48, 72});
    double focal = focal_ctc_loss(logits, target, cfg, cs.blank_id());
    EXPECT_NEAR(focal, 0.0, 1e-12);
}

TEST(FocalCtc, BoundedByAlphaTimesCtc) {
    FocalConfig cfg;
    Rng rng(95);
    for (int i = 0; i < 30; ++i) {
        Tensor logits = random_logits(4, 6, rng);
        std::vector<int> target = {static_cast<int>(rng.below(3))};
        double plain = ctc_loss(logits, target, 3);
        double focal = focal_ctc_loss(logits, target, cfg, 3);
        EXPECT_LE(focal, cfg.alpha * plain + 1e-12);
        EXPECT_GE(focal, 0.0);
    }
}

TEST(GradCheck, CtcLossThreeClassFourFrame) {
    Rng rng(97);
    Tensor logits = random_logits(3, 4, rng);
    std::vector<int> target = {0, 1};
    auto loss = [&]() { return ctc_loss(logits, target, 2); };
    Tensor grad;
    ctc_loss(logits, target, 2, &grad);
    std::vector<double> got, want;
    for (size_t i = 0; i < logits.data.size(); ++i) {
        got.push_back(grad.data[i]);
        want.push_back(fd(loss, &logits.data[i], 1e-6));
    }
    EXPECT_LT(grad_rel_err(got, want), 1e-4);
}

TEST(GradCheck, FocalGradIsWeightTimesCtcGrad) {
    FocalConfig cfg;
    Rng rng(99);
    Tensor logits = random_logits(4, 5, rng);
    std::vector<int> target = {1, 0};
    Tensor g_plain, g_focal;
    ctc_loss(logits, target, 3, &g_plain);
    focal_ctc_loss(logits, target, cfg, 3, &g_focal);
    double p = plate_probability(logits, cfg, 3);
    double w = focal_weight(p, cfg);
    for (size_t i = 0; i < g_plain.data.size(); ++i)
        EXPECT_NEAR(g_focal.data[i], w * g_plain.data[i], 1e-12);
}
