#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtc/datasets.hpp"
#include "vtc/evalsuite.hpp"
#include "vtc/model.hpp"
#include "vtc/trainer.hpp"

namespace vtc {

struct EvalSection {
    int views = 3;
    std::vector<std::string> probes;  // reversal | transfer | ablation
    std::string transfer_target;      // default: first video dataset with reversal pairs, else first video
    std::string transfer_source_tag = "model";
    int transfer_head_epochs = 5;
    int ablation_epochs = 0;  // 0 -> train.epochs
    std::vector<Threshold> thresholds;
};

struct IoSection {
    std::string run_dir = "runs/run";
    uint64_t seed = 1;
};

// One config file drives every command: sections model / datasets / train /
// eval / io. Unknown keys are rejected; parsing expands every default, and the
// expanded form is written into the run directory as config.resolved.json.
struct ExperimentConfig {
    ModelConfig model;  // head table derived from the dataset list
    std::vector<DatasetSpec> datasets;
    TrainConfig train;
    EvalSection eval;
    IoSection io;

    Registry build_registry() const;
    nlohmann::json resolved() const;
    uint64_t hash() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         std::optional<uint64_t> seed_override = std::nullopt);
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<uint64_t> seed_override = std::nullopt);

struct CliOptions {
    std::string config_path;
    std::string checkpoint;
    std::string out;    // overrides io.run_dir
    std::string probe;  // reversal | transfer | ablation
    std::optional<uint64_t> seed;
    bool overwrite = false;
};

int cmd_gen(const CliOptions& opts);
int cmd_train(const CliOptions& opts, Stage stage);
int cmd_eval(const CliOptions& opts);
int cmd_probe(const CliOptions& opts);
int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace vtc
