#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vtc/datasets.hpp"
#include "vtc/model.hpp"
#include "vtc/trainer.hpp"

namespace vtc {

struct EvalReport {
    std::string dataset_id;
    double top1 = 0.0;                    // fraction in [0, 1]
    std::vector<double> per_class;        // fraction per class index
    int clip_count = 0;
    int views = 1;
    std::string params_hash;
    std::string config_hash;
};

struct EvalOptions {
    int views = 3;                                          // 1 or 3 spatial crops
    std::function<VideoClip(const VideoClip&)> transform;   // applied before cropping
    int threads = 0;                                        // 0 -> hardware default
};

struct EvalResult {
    EvalReport report;
    std::vector<int> labels;
    std::vector<int> predictions;
    // per clip, per view: class probabilities (kept for auditing/averaging checks)
    std::vector<std::vector<std::vector<double>>> view_probs;
};

// Deterministic crop offsets (top, left) for the 1x1 / 1x3 view schemes; the
// three crops sweep the longer axis and center the other.
std::vector<std::pair<int, int>> eval_crop_offsets(int h, int w, int crop_h, int crop_w, int views);

// Averages class probabilities over the views, then argmax with ties broken
// toward the lowest class index.
EvalResult evaluate_full(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                         const EvalOptions& opts = {});
EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                    const EvalOptions& opts = {});

struct ProbeReport {
    std::string kind;     // reversal | transfer | ablation
    std::string subject;  // dataset id or grid label
    std::vector<std::string> columns;
    struct Row {
        std::string condition;
        std::vector<double> values;  // fractions; NaN marks an empty cell
    };
    std::vector<Row> rows;
    struct Delta {
        std::string name;
        double value;
    };
    std::vector<Delta> deltas;  // each computed as an exact difference of two row entries
    std::string params_hash;
    std::string config_hash;

    double value_at(const std::string& condition, const std::string& column) const;
};

// Evaluates the dataset on normal and reversed frame order; for datasets with
// nontrivial reversal pairs also scores the reversed predictions against
// r(.)-mapped labels.
ProbeReport reversal_probe(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                           int views = 3);

// Freezes the backbone, reinitializes the target's head, trains it alone for
// `head_epochs`, and reports the target accuracy. Mutates `params` (the head);
// spatial and temporal partitions are bit-identical afterwards.
ProbeReport transfer_probe(ModelParams& params, const ModelConfig& cfg, const Registry& registry,
                           const std::string& target_id, const std::string& source_tag, int head_epochs,
                           const TrainConfig& base_cfg, int views = 3);

struct AblationRunSpec {
    std::string label;
    std::vector<std::string> dataset_ids;
    std::map<std::string, double> weights;  // overrides per dataset id
};

// Independent runs per video dataset, pairwise and full co-training, plus the
// image loss-weight grid {0, 0.5, 0.75} when an image dataset is registered.
std::vector<AblationRunSpec> default_ablation_runs(const Registry& registry);

// Trains one run per configuration with shared seeds and tabulates the eval
// accuracy of every dataset in that run.
ProbeReport ablation_matrix(const ModelConfig& model_template, const Registry& registry,
                            const std::vector<AblationRunSpec>& runs, const TrainConfig& tcfg,
                            uint64_t param_seed, int views = 3);

struct Threshold {
    std::string name;
    std::string metric;  // e.g. "top1:motion", "reversal_delta:motion", "transfer:cotrained->motion"
    std::optional<double> min;
    std::optional<double> max;
};

using MetricBag = std::map<std::string, double>;

void collect_metrics(const EvalReport& r, MetricBag& bag);
void collect_metrics(const ProbeReport& r, MetricBag& bag);
// Returns one message per violated threshold (empty -> all pass).
std::vector<std::string> check_thresholds(const std::vector<Threshold>& thresholds, const MetricBag& bag);

}  // namespace vtc
