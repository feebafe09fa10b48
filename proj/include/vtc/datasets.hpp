#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vtc/rng.hpp"
#include "vtc/tensor.hpp"

namespace vtc {

enum class Modality { Video, Image };
enum class GeneratorKind { Appearance, Motion, Image };

std::string generator_kind_name(GeneratorKind k);
GeneratorKind generator_kind_from_name(const std::string& s);

struct DatasetSpec {
    std::string id;
    std::string name;
    GeneratorKind kind = GeneratorKind::Appearance;
    int classes = 4;
    int train_size = 2000;
    int eval_size = 500;
    bool flip_allowed = true;
    double loss_weight = 1.0;
    uint64_t seed = 0;
    int frames = 4;
    int height = 16;
    int width = 20;
    int channels = 1;

    Modality modality() const { return kind == GeneratorKind::Image ? Modality::Image : Modality::Video; }
    void validate() const;
};

struct VideoClip {
    Tensor frames;  // [n, h, w, channels], values in [0, 1]
    int label = 0;
    std::string dataset_id;
};

enum class Split { Train, Eval };

// A generator-backed dataset: clips are regenerated on demand, bit-identically,
// from (spec, seed, split, index) alone.
class Dataset {
  public:
    explicit Dataset(DatasetSpec spec);

    const DatasetSpec& spec() const { return spec_; }
    int size(Split split) const { return split == Split::Train ? spec_.train_size : spec_.eval_size; }
    VideoClip clip(Split split, int index) const;

    // Class the clip belongs to after frame reversal. The motion generator
    // builds classes in direction pairs r(c) = c^1; static content is its own
    // reversal class.
    int reversal_class(int c) const;

  private:
    DatasetSpec spec_;
};

// Noiseless moving-blob frames; exposed so tests can check the generator-level
// mirror identity that motivates disabling horizontal flips for motion data.
Tensor render_motion_frames(int frames, int height, int width, int channels, double cx, double cy,
                            double dir_x, double dir_y, double speed, double blob_sigma);

class Registry {
  public:
    void add(DatasetSpec spec);
    bool has(const std::string& id) const;
    const Dataset& at(const std::string& id) const;
    const std::vector<std::unique_ptr<Dataset>>& all() const { return datasets_; }
    size_t count() const { return datasets_.size(); }

  private:
    std::vector<std::unique_ptr<Dataset>> datasets_;
};

// Mixed-batch composition. Each slot picks a dataset with probability
// proportional to its train size (with replacement); within a dataset, clips
// are walked through seed-deterministic shuffles so every clip is seen about
// once per round.
class Sampler {
  public:
    struct Draw {
        const Dataset* dataset;
        int clip_index;
    };

    // `include` filters the registry (pass ids with positive loss weight).
    Sampler(const Registry& registry, const std::vector<std::string>& include, uint64_t seed);

    Draw draw();
    std::vector<Draw> compose_batch(int batch_size);

    int64_t total_draws() const { return total_draws_; }
    const std::map<std::string, int64_t>& draw_counts() const { return draw_counts_; }

    std::map<std::string, std::pair<int64_t, int64_t>> cursor_state() const;  // id -> (round, pos)
    void restore(int64_t total_draws, const std::map<std::string, std::pair<int64_t, int64_t>>& cursors);

  private:
    struct Source {
        const Dataset* dataset;
        std::vector<int> perm;
        int64_t round = 0;
        int64_t pos = 0;
    };
    void reshuffle(Source& src);

    std::vector<Source> sources_;
    uint64_t seed_;
    CounterRng pick_rng_;
    int64_t total_draws_ = 0;
    std::map<std::string, int64_t> draw_counts_;
};

// One crop offset shared by all frames, then an optional horizontal flip
// (probability 0.5, only when the spec allows it). Labels are unchanged.
VideoClip augment(const VideoClip& clip, const DatasetSpec& spec, int crop_h, int crop_w, CounterRng& rng);

// Deterministic spatial crop for evaluation views.
VideoClip crop_clip(const VideoClip& clip, int oy, int ox, int crop_h, int crop_w);

VideoClip reverse_frames(const VideoClip& clip);

}  // namespace vtc
