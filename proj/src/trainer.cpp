#include "vtc/trainer.hpp"

#include <algorithm>
#include <chrono>

#include "vtc/util.hpp"

namespace vtc {

std::string stage_name(Stage s) { return s == Stage::Pretrain ? "pretrain" : "cotrain"; }

Stage stage_from_name(const std::string& s) {
    if (s == "pretrain") return Stage::Pretrain;
    if (s == "cotrain") return Stage::Cotrain;
    fail("unknown stage '", s, "' (expected pretrain or cotrain)");
}

std::string precision_name(Precision p) { return p == Precision::Single ? "single" : "double"; }

Precision precision_from_name(const std::string& s) {
    if (s == "single") return Precision::Single;
    if (s == "double") return Precision::Double;
    fail("unknown precision '", s, "' (expected single or double)");
}

std::vector<int> TrainConfig::resolved_drop_epochs() const {
    if (!lr_drop_epochs.empty()) return lr_drop_epochs;
    // Keep the reference schedule's shape: drops at 55% and 75% of the run
    // (epochs 11 and 15 of 20).
    std::vector<int> drops{epochs * 55 / 100, epochs * 75 / 100};
    drops.erase(std::remove(drops.begin(), drops.end(), 0), drops.end());
    drops.erase(std::unique(drops.begin(), drops.end()), drops.end());
    return drops;
}

void TrainConfig::validate() const {
    if (epochs < 0) fail("train: epochs must be >= 0");
    if (batch_size < 1) fail("train: batch_size must be >= 1");
    if (base_lr <= 0.0) fail("train: base_lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) fail("train: momentum must be in [0, 1)");
    if (lr_drop_factor <= 0.0) fail("train: lr_drop_factor must be positive");
    const std::vector<int> drops = resolved_drop_epochs();
    for (size_t i = 0; i < drops.size(); ++i) {
        if (drops[i] <= 0 || drops[i] >= std::max(epochs, 1))
            fail("train: lr drop epoch ", drops[i], " outside (0, ", epochs, ")");
        if (i > 0 && drops[i] <= drops[i - 1]) fail("train: lr drop epochs must be strictly increasing");
    }
    for (const auto& [id, w] : loss_weights)
        if (w < 0.0) fail("train: loss weight for '", id, "' must be >= 0, got ", w);
}

uint64_t TrainConfig::hash() const {
    std::string repr = cat(stage_name(stage), "|", epochs, "|", batch_size, "|", base_lr, "|",
                           lr_drop_factor, "|", momentum, "|", seed, "|", precision_name(precision));
    for (int e : resolved_drop_epochs()) repr += cat("|d", e);
    for (const auto& [id, w] : loss_weights) repr += cat("|w:", id, "=", w);
    return fnv1a(repr);
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= std::max(cfg.epochs, 1))
        fail("lr_at: epoch ", epoch, " outside [0, ", cfg.epochs, ")");
    double lr = cfg.base_lr;
    for (int drop : cfg.resolved_drop_epochs())
        if (epoch >= drop) lr *= cfg.lr_drop_factor;
    return lr;
}

namespace {

double dataset_weight(const TrainConfig& cfg, const DatasetSpec& spec) {
    auto it = cfg.loss_weights.find(spec.id);
    return it != cfg.loss_weights.end() ? it->second : spec.loss_weight;
}

}  // namespace

Trainer::Trainer(ModelParams& params, const ModelConfig& model_cfg, const Registry& registry,
                 TrainConfig cfg, MetricsSink* sink, std::string run_id)
    : params_(params),
      model_cfg_(model_cfg),
      registry_(registry),
      cfg_(std::move(cfg)),
      sink_(sink),
      run_id_(std::move(run_id)),
      sampler_([&] {
          cfg_.validate();
          if (registry.count() == 0) fail("trainer: empty dataset registry");
          bool any_video = false;
          for (const auto& d : registry.all()) {
              const DatasetSpec& spec = d->spec();
              if (cfg_.stage == Stage::Pretrain && spec.modality() == Modality::Video)
                  fail("pretrain stage accepts image datasets only; got video dataset '", spec.id, "'");
              if (spec.modality() == Modality::Video) any_video = true;
              if (dataset_weight(cfg_, spec) > 0.0) active_.push_back(spec.id);
              if (!model_cfg.find_head(spec.id))
                  fail("trainer: dataset '", spec.id, "' has no classification head in the model config");
          }
          if (cfg_.stage == Stage::Cotrain && !any_video)
              fail("cotrain stage needs at least one video dataset");
          if (active_.empty()) fail("trainer: all effective loss weights are zero");
          return Sampler(registry, active_, cfg_.seed);
      }()),
      opt_(OptimizerState{}) {
    if (cfg_.trainable) {
        mask_ = *cfg_.trainable;
    } else if (cfg_.stage == Stage::Pretrain) {
        mask_ = TrainableMask::spatial_and_heads(active_);
    } else {
        mask_ = TrainableMask::all();
    }
    int64_t total = 0;
    for (const std::string& id : active_) total += registry_.at(id).spec().train_size;
    steps_per_epoch_ = std::max<int64_t>(1, total / cfg_.batch_size);
    opt_ = OptimizerState::init(params_.select(mask_), cfg_.momentum, cfg_.base_lr);
}

double Trainer::weight_of(const std::string& id) const {
    return dataset_weight(cfg_, registry_.at(id).spec());
}

void Trainer::step_once() {
    const auto wall_start = std::chrono::steady_clock::now();
    const int epoch = epoch_of(step_);
    opt_.learning_rate = lr_at(epoch, cfg_);
    const bool quantize = cfg_.precision == Precision::Single;

    std::vector<Sampler::Draw> batch = sampler_.compose_batch(cfg_.batch_size);

    Tape tape;
    for (auto& [name, t] : params_.select(mask_)) tape.watch(*t);

    // Load and augment every slot, then group clips into one batched forward
    // per frame count (video clips and single-frame images run separately).
    CounterRng aug_base(CounterRng::derive(cfg_.seed, rng_stream::kAugment));
    std::vector<VideoClip> clips(batch.size());
    std::vector<int> frame_count(batch.size());
    for (size_t slot = 0; slot < batch.size(); ++slot) {
        const Sampler::Draw& d = batch[slot];
        VideoClip clip = d.dataset->clip(Split::Train, d.clip_index);
        CounterRng aug_rng = aug_base.stream(static_cast<uint64_t>(step_) * cfg_.batch_size + slot);
        clips[slot] = augment(clip, d.dataset->spec(), model_cfg_.height, model_cfg_.width, aug_rng);
        frame_count[slot] = clips[slot].frames.shape[0];
    }
    std::vector<int> bucket_frames;  // descending, videos before images
    for (int n : frame_count)
        if (std::find(bucket_frames.begin(), bucket_frames.end(), n) == bucket_frames.end())
            bucket_frames.push_back(n);
    std::sort(bucket_frames.rbegin(), bucket_frames.rend());

    std::vector<Tensor> bucket_features(bucket_frames.size());
    std::vector<std::pair<int, int>> slot_pos(batch.size());  // slot -> (bucket, row)
    for (size_t bi = 0; bi < bucket_frames.size(); ++bi) {
        std::vector<const Tensor*> members;
        for (size_t slot = 0; slot < batch.size(); ++slot) {
            if (frame_count[slot] != bucket_frames[bi]) continue;
            slot_pos[slot] = {static_cast<int>(bi), static_cast<int>(members.size())};
            members.push_back(&clips[slot].frames);
        }
        // Single-frame clips take the degenerate temporal path; attention over
        // one frame computes the same function.
        const TemporalMode mode = (cfg_.stage == Stage::Pretrain || bucket_frames[bi] == 1)
                                      ? TemporalMode::Degenerate
                                      : TemporalMode::Attention;
        bucket_features[bi] = forward_features_batch(tape, params_, model_cfg_, members, mode);
    }

    // Batch loss: sum_i w_i * mean(cross-entropy of dataset i's samples).
    Tensor total;
    bool first = true;
    last_dataset_loss_.clear();
    for (const std::string& id : active_) {
        std::vector<int> rows;
        std::vector<int> labels;
        int bucket = -1;
        for (size_t slot = 0; slot < batch.size(); ++slot) {
            if (batch[slot].dataset->spec().id != id) continue;
            bucket = slot_pos[slot].first;
            rows.push_back(slot_pos[slot].second);
            labels.push_back(clips[slot].label);
        }
        if (rows.empty()) continue;  // dataset absent from this batch
        Tensor feats = gather_rows(tape, bucket_features[static_cast<size_t>(bucket)], rows);
        Tensor logits = classify_batch(tape, params_, model_cfg_, id, feats);
        Tensor mean = cross_entropy(tape, logits, labels);
        last_dataset_loss_[id] = mean.values[0];
        epoch_accum_[id].sum += mean.values[0];
        epoch_accum_[id].count += 1;
        Tensor weighted = scale(tape, mean, weight_of(id));
        total = first ? weighted : add(tape, total, weighted);
        first = false;
    }
    last_total_loss_ = total.values[0];
    epoch_accum_["_total"].sum += last_total_loss_;
    epoch_accum_["_total"].count += 1;

    tape.backward(total);
    auto trainable = params_.select(mask_);
    sgd_momentum_step(trainable, opt_, quantize);

    if (sink_ && (step_ % cfg_.log_every == 0 || step_ + 1 == total_steps())) {
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start).count();
        for (const auto& [id, loss] : last_dataset_loss_)
            sink_->write({{"run_id", run_id_},
                          {"step", step_},
                          {"epoch", epoch},
                          {"dataset_id", id},
                          {"loss", loss},
                          {"lr", opt_.learning_rate},
                          {"wall_ms", wall_ms}});
        sink_->write({{"run_id", run_id_},
                      {"step", step_},
                      {"epoch", epoch},
                      {"dataset_id", "_total"},
                      {"loss", last_total_loss_},
                      {"lr", opt_.learning_rate},
                      {"wall_ms", wall_ms}});
    }

    ++step_;
    if (step_ % steps_per_epoch_ == 0) {
        const LossAccum& acc = epoch_accum_["_total"];
        epoch_mean_loss_.push_back(acc.count > 0 ? acc.sum / acc.count : 0.0);
        epoch_accum_.clear();
    }
}

void Trainer::run() { run_steps(total_steps() - step_); }

void Trainer::run_steps(int64_t n) {
    for (int64_t i = 0; i < n && step_ < total_steps(); ++i) step_once();
}

TrainerSnapshot Trainer::snapshot() const {
    TrainerSnapshot snap;
    snap.step = step_;
    snap.train_config_hash = cfg_.hash();
    for (const auto& [id, rp] : sampler_.cursor_state())
        snap.sampler_cursors[id] = SamplerCursor{rp.first, rp.second};
    snap.loss_accum = epoch_accum_;
    snap.velocity = opt_.velocity;
    return snap;
}

void Trainer::save(const std::filesystem::path& path) const {
    const TrainerSnapshot snap = snapshot();
    save_checkpoint(path, model_cfg_, params_, &snap);
}

void Trainer::restore(const TrainerSnapshot& snap) {
    if (snap.train_config_hash != cfg_.hash())
        fail("checkpoint was written under a different train config (hash ", hex64(snap.train_config_hash),
             " vs ", hex64(cfg_.hash()), ")");
    step_ = snap.step;
    epoch_accum_ = snap.loss_accum;
    for (auto& [name, v] : opt_.velocity) {
        auto it = snap.velocity.find(name);
        if (it == snap.velocity.end()) fail("checkpoint lacks velocity for trainable parameter '", name, "'");
        if (it->second.size() != v.size()) fail("velocity shape mismatch for '", name, "'");
        v = it->second;
    }
    std::map<std::string, std::pair<int64_t, int64_t>> cursors;
    for (const auto& [id, c] : snap.sampler_cursors) cursors[id] = {c.round, c.pos};
    sampler_.restore(static_cast<int64_t>(step_) * cfg_.batch_size, cursors);
    // Rebuild the epoch history length so epoch means keep appending cleanly.
    epoch_mean_loss_.assign(static_cast<size_t>(step_ / steps_per_epoch_), 0.0);
}

}  // namespace vtc
