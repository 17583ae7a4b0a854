#pragma once

#include <string>
#include <vector>

#include "lptr/charset.hpp"
#include "lptr/core/tensor.hpp"

namespace lptr::ctc {

/// Focal weighting configuration. p is the model's confidence in its own
/// plate reading; see plate_probability for the two ways of constructing it.
struct FocalConfig {
    enum class PMode { greedy_product, exp_neg_ctc };

    double alpha = 0.5;
    double gamma = 2.0;
    PMode p_mode = PMode::greedy_product;
};

/// Alignment-free sequence loss: -log of the total probability of all frame
/// paths that collapse (merge repeats, drop blanks) to `target`. Log-space
/// forward algorithm over the blank-extended label sequence. If grad_logits
/// is non-null it receives dL/dlogits (through the per-frame softmax).
/// logits: (K, T); target: non-empty, ids in [0, K) excluding blank_id.
double ctc_loss(const Tensor& logits, const std::vector<int>& target, int blank_id,
                Tensor* grad_logits = nullptr);

/// Exhaustive |K|^T path enumeration with the same collapse semantics; the
/// independent oracle for ctc_loss. Throws TooLarge when |K|^T > 1e7.
double ctc_bruteforce(const Tensor& logits, const std::vector<int>& target,
                      int blank_id);

/// Per-frame argmax IDs (ties break to the lowest id).
std::vector<int> greedy_ids(const Tensor& logits);

/// CTC collapse: merge consecutive repeats, then drop blanks.
std::vector<int> collapse(const std::vector<int>& frame_ids, int blank_id);

std::string greedy_decode(const Tensor& logits, const Charset& cs);

/// Confidence of the greedy reading, clamped to [1e-7, 1].
/// greedy_product: product over frames of the argmax-class softmax probability.
/// exp_neg_ctc: exp(-ctc_loss) with respect to the greedy-decoded string.
double plate_probability(const Tensor& logits, const FocalConfig& cfg, int blank_id);

/// alpha * (1 - p)^gamma.
double focal_weight(double p, const FocalConfig& cfg);

/// focal_weight(p) * ctc_loss. The weight is treated as a constant in the
/// backward pass: grad = weight * dCTC/dlogits.
double focal_ctc_loss(const Tensor& logits, const std::vector<int>& target,
                      const FocalConfig& cfg, int blank_id,
                      Tensor* grad_logits = nullptr);

}  // namespace lptr::ctc
