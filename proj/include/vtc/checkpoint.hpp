#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtc/model.hpp"

namespace vtc {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct SamplerCursor {
    int64_t round = 0;
    int64_t pos = 0;
};

struct LossAccum {
    double sum = 0.0;
    int64_t count = 0;
};

// Everything beyond the parameters that fixes the rest of a training run:
// restoring it and re-running continues the uninterrupted trajectory
// bit-for-bit (sampling and augmentation are pure functions of the step).
struct TrainerSnapshot {
    int64_t step = 0;
    uint64_t train_config_hash = 0;
    std::map<std::string, SamplerCursor> sampler_cursors;
    std::map<std::string, LossAccum> loss_accum;
    std::map<std::string, std::vector<double>> velocity;
};

struct Checkpoint {
    ModelConfig model;
    ModelParams params;
    std::optional<TrainerSnapshot> run;
};

// Single-file container: magic, manifest length, JSON manifest (config plus
// the named array directory with shapes and partition tags), then flat
// little-endian float32 arrays in manifest order. Writes are atomic
// (temp file + rename); a truncated or altered file is rejected on load.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params, const TrainerSnapshot* run = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

uint64_t file_hash(const std::filesystem::path& path);

}  // namespace vtc
