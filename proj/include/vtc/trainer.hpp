#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vtc/checkpoint.hpp"
#include "vtc/datasets.hpp"
#include "vtc/metrics.hpp"
#include "vtc/model.hpp"
#include "vtc/sgd.hpp"

namespace vtc {

enum class Stage { Pretrain, Cotrain };
enum class Precision { Single, Double };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& s);
std::string precision_name(Precision p);
Precision precision_from_name(const std::string& s);

struct TrainConfig {
    Stage stage = Stage::Cotrain;
    int epochs = 20;
    int batch_size = 32;
    // The reference schedule at batch 128 starts at 5e-3; scale linearly.
    double base_lr = 5e-3 * (32.0 / 128.0);
    std::vector<int> lr_drop_epochs;  // empty -> drops at 55% and 75% of epochs
    double lr_drop_factor = 0.1;
    double momentum = 0.9;
    std::map<std::string, double> loss_weights;  // defaults to each spec's weight
    uint64_t seed = 1;
    Precision precision = Precision::Single;
    std::optional<TrainableMask> trainable;  // defaults per stage
    int log_every = 25;

    std::vector<int> resolved_drop_epochs() const;
    void validate() const;
    uint64_t hash() const;
};

// Piecewise-constant step schedule.
double lr_at(int epoch, const TrainConfig& cfg);

// Owns one training run over a registry: pretraining optimizes the spatial
// partition and image heads with the temporal sublayer in its degenerate mode;
// co-training minimizes the weighted sum of per-dataset losses over mixed
// batches through the shared backbone.
class Trainer {
  public:
    Trainer(ModelParams& params, const ModelConfig& model_cfg, const Registry& registry,
            TrainConfig cfg, MetricsSink* sink = nullptr, std::string run_id = "run");

    int steps_per_epoch() const { return steps_per_epoch_; }
    int64_t total_steps() const { return static_cast<int64_t>(cfg_.epochs) * steps_per_epoch_; }
    int64_t step() const { return step_; }
    int epoch_of(int64_t step) const { return static_cast<int>(step / steps_per_epoch_); }

    void run();                // until total_steps
    void run_steps(int64_t n); // at most n more steps

    // Weighted total loss of the most recent step and its per-dataset terms.
    double last_total_loss() const { return last_total_loss_; }
    const std::map<std::string, double>& last_dataset_loss() const { return last_dataset_loss_; }
    // Mean total loss per finished epoch.
    const std::vector<double>& epoch_mean_loss() const { return epoch_mean_loss_; }

    const std::vector<std::string>& active_datasets() const { return active_; }
    double weight_of(const std::string& id) const;

    void save(const std::filesystem::path& path) const;
    // Params must already hold the checkpoint's values; restores step,
    // velocities and sampler cursors so training continues bit-identically.
    void restore(const TrainerSnapshot& snap);
    TrainerSnapshot snapshot() const;

  private:
    void step_once();

    ModelParams& params_;
    const ModelConfig& model_cfg_;
    const Registry& registry_;
    TrainConfig cfg_;
    MetricsSink* sink_;
    std::string run_id_;

    std::vector<std::string> active_;  // ids with positive weight, registry order
    TrainableMask mask_;
    Sampler sampler_;
    OptimizerState opt_;
    int steps_per_epoch_ = 0;
    int64_t step_ = 0;

    double last_total_loss_ = 0.0;
    std::map<std::string, double> last_dataset_loss_;
    std::map<std::string, LossAccum> epoch_accum_;
    std::vector<double> epoch_mean_loss_;
};

}  // namespace vtc
