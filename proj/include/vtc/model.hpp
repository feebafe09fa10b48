#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vtc/tensor.hpp"

namespace vtc {

enum class Partition { Spatial, Temporal, Head };

std::string partition_name(Partition p);
Partition partition_from_name(const std::string& s);

struct HeadSpec {
    std::string dataset_id;
    int classes = 0;
};

struct ModelConfig {
    int blocks = 2;
    int d_model = 32;
    int heads = 4;
    int patch = 4;
    int frames = 4;
    int height = 16;
    int width = 16;
    int channels = 1;
    int mlp_ratio = 4;
    std::vector<HeadSpec> head_table;

    int patches_x() const { return width / patch; }
    int patches_y() const { return height / patch; }
    int patches_per_frame() const { return patches_x() * patches_y(); }
    int tokens_per_frame() const { return patches_per_frame() + 1; }
    const HeadSpec* find_head(const std::string& dataset_id) const;
    void validate() const;
    // Equality of everything except the head table; checkpoints from a
    // pretraining stage are loadable into runs that add heads.
    bool same_backbone(const ModelConfig& other) const;
};

constexpr double kLayerNormEps = 1e-5;

struct ParamEntry {
    std::string name;
    Partition partition;
    std::string head_id;  // set only for Partition::Head
    Tensor tensor;
};

// Which partitions receive gradients and optimizer updates.
struct TrainableMask {
    bool spatial = true;
    bool temporal = true;
    std::vector<std::string> heads;  // empty + all_heads -> every head
    bool all_heads = true;

    bool includes(const ParamEntry& e) const;
    static TrainableMask all();
    static TrainableMask spatial_and_heads(std::vector<std::string> head_ids);
    static TrainableMask heads_only(std::vector<std::string> head_ids);
};

// The full parameter set, partitioned into spatial / temporal / per-dataset
// head parameters. Entry order is fixed by the config and defines the
// checkpoint layout.
class ModelParams {
  public:
    static ModelParams init(const ModelConfig& cfg, uint64_t seed, bool quantize_f32);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    std::vector<std::pair<std::string, Tensor*>> select(const TrainableMask& mask);
    int64_t value_count(std::optional<Partition> p = std::nullopt) const;
    // FNV over the raw double bits of the selected partition, for freeze checks.
    uint64_t hash(std::optional<Partition> p = std::nullopt) const;
    uint64_t head_hash(const std::string& dataset_id) const;

    void add_head(const std::string& dataset_id, int classes, uint64_t seed, bool quantize_f32);
    void reinit_head(const std::string& dataset_id, int classes, uint64_t seed, bool quantize_f32);

  private:
    std::vector<ParamEntry> entries_;
    void push(std::string name, Partition p, std::string head_id, Tensor t);
    friend ModelParams make_params_for_entries(std::vector<ParamEntry>);
};

ModelParams make_params_for_entries(std::vector<ParamEntry> entries);

// How the temporal sublayer runs. Degenerate computes only the value/output
// projection path, which is what single-frame attention reduces to; it is the
// forward used while pretraining on images.
enum class TemporalMode { Attention, Degenerate };

struct TokenGrid {
    Tensor tokens;  // [frames, patches_per_frame + 1, d_model]; row 0 of each frame is the class token
    int frames = 0;
    int tokens_per_frame = 0;
    int clips = 1;  // > 1 for the batched forward (clips stacked along the rows)
};

struct AttnParams {
    const Tensor *wq, *wk, *wv, *wo;
    const Tensor *bq, *bk, *bv, *bo;
};

AttnParams attn_params(const ModelParams& params, const std::string& prefix);

// Scaled dot-product attention over `groups` independent row blocks: queries
// are [groups*tq x d], keys/values [groups*tkv x d]; within each block every
// head attends from its queries to its keys/values and the head outputs are
// concatenated. One fused record node; the backward is hand-written and
// covered by the finite-difference checks.
Tensor attention_mix(Tape& tape, const Tensor& queries, const Tensor& keys, const Tensor& values,
                     int groups, int heads);

// Cuts the clip [n, h, w, c] into patches, projects them to d_model, adds
// spatial and temporal positional embeddings and prepends a class token per
// frame.
TokenGrid patchify(Tape& tape, const ModelParams& params, const ModelConfig& cfg, const Tensor& clip);

// Scaled dot-product multi-head attention over row sets, followed by the
// output transformation. Queries keep their order; keys/values are one set.
Tensor mha(Tape& tape, const AttnParams& p, const Tensor& queries, const Tensor& keys,
           const Tensor& values, int heads);
// The single-element degenerate path: output projection of the value projection.
Tensor mha_degenerate(Tape& tape, const AttnParams& p, const Tensor& values);

// One block: temporal attention, spatial attention, MLP, each as a pre-norm
// residual sublayer. Temporal attention mixes tokens across frames at a fixed
// patch index (class tokens excluded); spatial attention mixes within a frame.
TokenGrid block_forward(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                        int block_index, const TokenGrid& grid, TemporalMode mode);

// Full backbone: patchify, `blocks` blocks, final norm, class tokens averaged
// over frames. Returns the clip representation [d_model].
Tensor forward_features(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                        const Tensor& clip, TemporalMode mode);

// Batched variant for training throughput: all clips must share one frame
// count. Returns [batch x d_model]; row b equals forward_features(clip b)
// (ops are row- or group-local, so the batched path computes the identical
// function).
Tensor forward_features_batch(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<const Tensor*>& clips, TemporalMode mode);

// Dataset head: logits [C_i] for the registered dataset.
Tensor classify(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                const std::string& dataset_id, const Tensor& features);
// Row-batched head application: [k x d_model] -> [k x C_i].
Tensor classify_batch(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                      const std::string& dataset_id, const Tensor& features);

}  // namespace vtc
