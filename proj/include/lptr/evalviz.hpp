#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lptr/charset.hpp"
#include "lptr/core/tensor.hpp"
#include "lptr/datagen.hpp"

namespace lptr::evalviz {

struct EvalRecord {
    std::string gt;
    std::string pred;
    datagen::Layout layout = datagen::Layout::single_line;
    std::string category = "standard";  // standard | special
};

struct Metrics {
    double acc_7c = 0.0;  // full-string match rate
    double acc_6c = 0.0;  // match rate ignoring the leading glyph
    double cp = 0.0;      // correctly recognized characters / ground-truth characters
};

/// Throws EmptyEvalSet on an empty record list. CP uses positional matching
/// for equal-length pairs and Levenshtein-aligned matches otherwise.
Metrics accuracy_metrics(const std::vector<EvalRecord>& records);

struct ErrorBreakdown {
    long special = 0;       // special-category plates (by tag)
    long chinese = 0;       // leading-glyph errors
    long mis_increase = 0;  // prediction longer than ground truth
    long missing = 0;       // prediction shorter than ground truth
    long confusion = 0;     // same length, non-leading glyph errors
    long total = 0;
};

/// Partitions misrecognized plates into the five categories; each erroneous
/// plate lands in exactly one bucket, precedence:
/// special tag > length surplus > length deficit > leading glyph > confusion.
ErrorBreakdown categorize_errors(const std::vector<EvalRecord>& records);

/// Number of matching glyphs on an optimal Levenshtein alignment path
/// (ties broken toward matches).
int aligned_matches(const std::vector<std::string>& gt,
                    const std::vector<std::string>& pred);

/// Writes <stem>.png (a labeled heatmap grid of all pages) and <stem>.csv
/// (the greedy ID row followed by the column-pooled logits of every page)
/// into out_dir. CSV output is byte-deterministic.
void export_pages(const Tensor& pages, const std::vector<int>& decoded_ids,
                  const std::string& out_dir, const std::string& stem);

struct BenchStats {
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double p95_ms = 0.0;
    int samples = 0;
    int repetitions = 0;
};

/// Times run_sample(index) over n_samples, `repetitions` passes after
/// `warmup` excluded passes, in deterministic sample order.
BenchStats bench(const std::function<void(int)>& run_sample, int n_samples,
                 int repetitions, int warmup = 1);

}  // namespace lptr::evalviz
