#include "lptr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lptr/core/error.hpp"
#include "lptr/nn.hpp"

namespace lptr::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-(std::fabs(a - b))));
}

void check_target(const Tensor& logits, const std::vector<int>& target, int blank_id) {
    if (logits.shape.size() != 2) throw ShapeMismatch("ctc expects (K, T) logits");
    if (target.empty()) throw Error("ctc: empty target");
    const int K = logits.dim(0);
    for (int id : target) {
        if (id < 0 || id >= K) throw Error("ctc: target id out of range");
        if (id == blank_id) throw Error("ctc: blank in target");
    }
}

/// Minimum frame count that admits any valid alignment.
int min_frames(const std::vector<int>& target) {
    int need = static_cast<int>(target.size());
    for (size_t i = 1; i < target.size(); ++i)
        if (target[i] == target[i - 1]) ++need;
    return need;
}

Tensor log_softmax_columns(const Tensor& logits) {
    const int K = logits.dim(0), T = logits.dim(1);
    Tensor lp(logits.shape);
    for (int t = 0; t < T; ++t) {
        double mx = kNegInf;
        for (int k = 0; k < K; ++k) mx = std::max(mx, logits.at(k, t));
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(logits.at(k, t) - mx);
        double lz = mx + std::log(z);
        for (int k = 0; k < K; ++k) lp.at(k, t) = logits.at(k, t) - lz;
    }
    return lp;
}

}  // namespace

double ctc_loss(const Tensor& logits, const std::vector<int>& target, int blank_id,
                Tensor* grad_logits) {
    check_target(logits, target, blank_id);
    const int T = logits.dim(1);
    const int L = static_cast<int>(target.size());
    if (T < min_frames(target))
        throw InfeasibleTarget("target needs " + std::to_string(min_frames(target)) +
                               " frames, have " + std::to_string(T));

    const int S = 2 * L + 1;
    auto label = [&](int s) { return s % 2 == 0 ? blank_id : target[s / 2]; };
    // skip transition s-2 -> s exists for non-blank states whose previous
    // non-blank label differs (s odd and >= 3 implies s-2 is odd as well)
    auto can_skip = [&](int s) {
        return s >= 2 && s % 2 == 1 && target[s / 2] != target[(s - 2) / 2];
    };

    Tensor lp = log_softmax_columns(logits);
    Tensor alpha({T, S});
    alpha.fill(kNegInf);
    alpha.at(0, 0) = lp.at(blank_id, 0);
    if (S > 1) alpha.at(0, 1) = lp.at(label(1), 0);
    for (int t = 1; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            double acc = alpha.at(t - 1, s);
            if (s >= 1) acc = log_add(acc, alpha.at(t - 1, s - 1));
            if (can_skip(s)) acc = log_add(acc, alpha.at(t - 1, s - 2));
            alpha.at(t, s) = acc == kNegInf ? kNegInf : acc + lp.at(label(s), t);
        }
    }
    double total = alpha.at(T - 1, S - 1);
    if (S > 1) total = log_add(total, alpha.at(T - 1, S - 2));
    if (total == kNegInf) throw InfeasibleTarget("no valid alignment path");
    double loss = -total;

    if (grad_logits) {
        // reverse-mode through the DP above
        Tensor galpha({T, S});
        Tensor glp(lp.shape);
        galpha.at(T - 1, S - 1) = -std::exp(alpha.at(T - 1, S - 1) - total);
        if (S > 1) galpha.at(T - 1, S - 2) = -std::exp(alpha.at(T - 1, S - 2) - total);
        for (int t = T - 1; t >= 1; --t) {
            for (int s = 0; s < S; ++s) {
                double g = galpha.at(t, s);
                if (g == 0.0 || alpha.at(t, s) == kNegInf) continue;
                glp.at(label(s), t) += g;
                double pre = alpha.at(t, s) - lp.at(label(s), t);
                double a0 = alpha.at(t - 1, s);
                if (a0 != kNegInf) galpha.at(t - 1, s) += g * std::exp(a0 - pre);
                if (s >= 1) {
                    double a1 = alpha.at(t - 1, s - 1);
                    if (a1 != kNegInf) galpha.at(t - 1, s - 1) += g * std::exp(a1 - pre);
                }
                if (can_skip(s)) {
                    double a2 = alpha.at(t - 1, s - 2);
                    if (a2 != kNegInf) galpha.at(t - 1, s - 2) += g * std::exp(a2 - pre);
                }
            }
        }
        glp.at(blank_id, 0) += galpha.at(0, 0);
        if (S > 1) glp.at(label(1), 0) += galpha.at(0, 1);

        // through the column-wise log-softmax
        const int K = logits.dim(0);
        *grad_logits = Tensor(logits.shape);
        for (int t = 0; t < T; ++t) {
            double gsum = 0.0;
            for (int k = 0; k < K; ++k) gsum += glp.at(k, t);
            for (int k = 0; k < K; ++k)
                grad_logits->at(k, t) = glp.at(k, t) - std::exp(lp.at(k, t)) * gsum;
        }
    }
    return loss;
}

double ctc_bruteforce(const Tensor& logits, const std::vector<int>& target,
                      int blank_id) {
    check_target(logits, target, blank_id);
    const int K = logits.dim(0), T = logits.dim(1);
    double paths = std::pow(static_cast<double>(K), T);
    if (paths > 1e7)
        throw TooLarge("brute force would enumerate " + std::to_string(paths) + " paths");

    Tensor probs = nn::softmax_columns(logits);
    std::vector<int> path(static_cast<size_t>(T), 0);
    double total = 0.0;
    while (true) {
        double p = 1.0;
        for (int t = 0; t < T; ++t) p *= probs.at(path[t], t);
        if (collapse(path, blank_id) == target) total += p;
        // odometer increment
        int t = 0;
        while (t < T) {
            if (++path[t] < K) break;
            path[t] = 0;
            ++t;
        }
        if (t == T) break;
    }
    if (total <= 0.0) throw InfeasibleTarget("no path collapses to the target");
    return -std::log(total);
}

std::vector<int> greedy_ids(const Tensor& logits) {
    const int K = logits.dim(0), T = logits.dim(1);
    std::vector<int> ids(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        int best = 0;
        for (int k = 1; k < K; ++k)
            if (logits.at(k, t) > logits.at(best, t)) best = k;
        ids[t] = best;
    }
    return ids;
}

std::vector<int> collapse(const std::vector<int>& frame_ids, int blank_id) {
    std::vector<int> out;
    int prev = -1;
    for (int id : frame_ids) {
        if (id != prev && id != blank_id) out.push_back(id);
        prev = id;
    }
    return out;
}

std::string greedy_decode(const Tensor& logits, const Charset& cs) {
    return cs.decode_ids(collapse(greedy_ids(logits), cs.blank_id()));
}

double plate_probability(const Tensor& logits, const FocalConfig& cfg, int blank_id) {
    const int T = logits.dim(1);
    Tensor probs = nn::softmax_columns(logits);
    std::vector<int> ids = greedy_ids(logits);
    double p;
    if (cfg.p_mode == FocalConfig::PMode::greedy_product) {
        p = 1.0;
        for (int t = 0; t < T; ++t) p *= probs.at(ids[t], t);
    } else {
        std::vector<int> decoded = collapse(ids, blank_id);
        if (decoded.empty()) {
            // the only path collapsing to "" is the all-blank path
            p = 1.0;
            for (int t = 0; t < T; ++t) p *= probs.at(blank_id, t);
        } else {
            p = std::exp(-ctc_loss(logits, decoded, blank_id));
        }
    }
    return std::clamp(p, 1e-7, 1.0);
}

double focal_weight(double p, const FocalConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
        throw ConfigError("focal alpha must be in (0, 1]");
    if (!(cfg.gamma >= 0.0)) throw ConfigError("focal gamma must be >= 0");
    return cfg.alpha * std::pow(1.0 - p, cfg.gamma);
}

double focal_ctc_loss(const Tensor& logits, const std::vector<int>& target,
                      const FocalConfig& cfg, int blank_id, Tensor* grad_logits) {
    double p = plate_probability(logits, cfg, blank_id);
    double w = focal_weight(p, cfg);
    double base = ctc_loss(logits, target, blank_id, grad_logits);
    if (grad_logits) *grad_logits *= w;
    return w * base;
}

}  // namespace lptr::ctc
