#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lptr/charset.hpp"
#include "lptr/checkpoint.hpp"
#include "lptr/ctc.hpp"
#include "lptr/dataset.hpp"
#include "lptr/nn.hpp"
#include "lptr/recognizer.hpp"
#include "lptr/rectifier.hpp"

namespace lptr::trainer {

enum class DataSource { vertex_crops, bbox_crops };
enum class LossKind { ctc, focal_ctc };

struct StagePlan {
    int index = 1;
    DataSource source = DataSource::vertex_crops;
    LossKind loss = LossKind::focal_ctc;
    double lr = 1e-3;
    int epochs = 30;
    int batch_size = 32;
    uint64_t seed = 1;
    std::vector<std::string> frozen_groups;  // prefixes: rectifier/backbone/head/attention
};

struct TrainPlan {
    std::vector<StagePlan> stages;
    ctc::FocalConfig focal;
    int workers = 0;  // 0 = all hardware threads; determinism holds per worker count

    /// Stage 1 trains the recognizer on vertex-rectified crops with the
    /// rectifier frozen; stage 2 freezes the recognizer and trains the
    /// rectifier on bounding-box crops; stage 3 fine-tunes both at the
    /// smaller learning rate.
    static TrainPlan desk_default(uint64_t seed);
    /// Full-scale settings (batch 300, 200 epochs per stage).
    static TrainPlan full_scale(uint64_t seed);
};

struct EpochMetrics {
    int stage = 0;
    int epoch = 0;
    double loss = 0.0;
    double seq_acc = 0.0;
};

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows);

/// Rectifier + recognizer pair trained end to end. `use_rectifier = false`
/// turns the model into the recognizer-only ablation: bounding-box crops are
/// simply resized to the recognizer input.
class Pipeline {
public:
    explicit Pipeline(ptr::RectifierConfig rcfg = {},
                      aflnet::RecognizerConfig acfg = {});

    void init(uint64_t seed);
    nn::ParamList params();
    long param_count();
    std::string config_text() const;

    /// Rectified view of a bounding-box crop (identity resize when the
    /// rectifier is disabled).
    Tensor rectify_crop(const Tensor& bbox_crop) const;
    Tensor crop_logits(const Tensor& bbox_crop) const;
    std::string read_crop(const Tensor& bbox_crop, const Charset& cs) const;

    ptr::Rectifier rectifier;
    aflnet::Recognizer recognizer;
    bool use_rectifier = true;
};

std::set<std::string> expand_frozen(const nn::ParamList& params,
                                    const std::vector<std::string>& groups);

/// Parameter-byte checksum, used by freezing tests and the CLI.
uint64_t params_checksum(const nn::ParamList& params,
                         const std::string& prefix = "");

struct StageResult {
    std::vector<EpochMetrics> epochs;
    long degenerate_quads = 0;
};

/// Runs one stage over the data. Frozen groups receive no update. Throws
/// DivergenceGuard when a batch loss turns non-finite.
StageResult train_stage(Pipeline& pipeline, nn::Adam& adam, const StagePlan& plan,
                        const ctc::FocalConfig& focal,
                        const std::vector<dataset::TrainSample>& data,
                        int workers = 0);

struct FullTrainResult {
    std::vector<EpochMetrics> metrics;
    std::vector<std::string> checkpoint_paths;  // one per completed stage
};

/// Executes the staged plan and writes a checkpoint after each stage into
/// checkpoint_dir (empty = no checkpoints).
FullTrainResult train_full(Pipeline& pipeline, const TrainPlan& plan,
                           const std::vector<dataset::TrainSample>& data,
                           const Charset& cs, const std::string& checkpoint_dir);

// --- evaluation probes -----------------------------------------------------

/// Sequence accuracy of greedy readings against labels.
double sequence_accuracy(const Pipeline& pipeline,
                         const std::vector<dataset::TrainSample>& data,
                         const Charset& cs, DataSource source, int workers = 0);

/// Mean distance between predicted and true plate vertices (normalized crop
/// units), averaged over samples.
double mean_corner_error(const Pipeline& pipeline,
                         const std::vector<dataset::TrainSample>& data,
                         int workers = 0);

Checkpoint snapshot(Pipeline& pipeline, const Charset& cs, int stage,
                    const nn::Adam* adam = nullptr);
void restore(Pipeline& pipeline, const Checkpoint& ckpt, const Charset& cs,
             nn::Adam* adam = nullptr);

/// Reconstructs a pipeline with the layout recorded in a checkpoint's config
/// text (rectifier mode, sizes, attention and rectifier switches).
Pipeline pipeline_from_config_text(const std::string& config_text);

}  // namespace lptr::trainer
