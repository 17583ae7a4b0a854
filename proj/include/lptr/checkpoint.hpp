#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lptr/core/tensor.hpp"
#include "lptr/nn.hpp"

namespace lptr::trainer {

/// Versioned binary container for all parameter groups, optimizer moments,
/// charset hash, stage marker and RNG state. Weights are stored as raw
/// float64 so a save/load round trip reproduces forward outputs bitwise;
/// Adam moments are stored as float32 (they never enter a forward pass).
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    uint32_t version = kVersion;
    uint64_t charset_hash = 0;
    int32_t stage = 0;
    std::string rng_state;
    std::string config_text;  // key=value lines describing the model layout

    std::vector<std::pair<std::string, Tensor>> tensors;  // named weights
    bool has_optimizer = false;
    int64_t adam_t = 0;
    std::vector<std::pair<std::string, Tensor>> adam_m;
    std::vector<std::pair<std::string, Tensor>> adam_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws CorruptFile on bad magic/CRC/truncation, VersionMismatch on an
/// unsupported format version.
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot of a parameter list.
Checkpoint make_checkpoint(const nn::ParamList& params, uint64_t charset_hash,
                           int stage, const std::string& rng_state,
                           const std::string& config_text,
                           const nn::Adam* adam = nullptr);

/// Writes checkpoint weights (and optimizer moments when present) back into
/// the parameter list. Throws CharsetMismatch when the hash differs,
/// CheckpointIncompatible when a parameter is missing or shaped differently.
void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamList& params,
                      uint64_t expected_charset_hash, nn::Adam* adam = nullptr);

}  // namespace lptr::trainer
