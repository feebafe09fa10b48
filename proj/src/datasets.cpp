#include "vtc/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtc/util.hpp"

namespace vtc {

namespace {

constexpr double kNoiseSigma = 0.05;
constexpr double kBlobSigma = 1.8;
constexpr double kBlobSpeed = 2.0;  // pixels per frame, keeps motion well above the noise floor

constexpr uint64_t kSplitTrain = 11, kSplitEval = 12;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

CounterRng clip_rng(const DatasetSpec& spec, Split split, int index) {
    CounterRng base(CounterRng::derive(spec.seed, rng_stream::kDataset));
    return base.stream(split == Split::Train ? kSplitTrain : kSplitEval).stream(static_cast<uint64_t>(index));
}

// Static axis-aligned sine stripes; the class fixes orientation (vertical or
// horizontal) and frequency, the clip fixes phase. Any single frame identifies
// the class, a horizontal flip only shifts the phase (so flips stay label-safe)
// and frame reversal changes nothing.
void fill_appearance(const DatasetSpec& spec, int label, CounterRng& rng, Tensor& frames) {
    const bool vertical = (label % 2) == 0;  // stripes vary along x or along y
    const double freq = 2.0 + label / 2;
    const double phase = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    for (int f = 0; f < spec.frames; ++f)
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                const double u = (vertical ? x : y) / 16.0;
                const double base = 0.5 + 0.35 * std::sin(2.0 * std::numbers::pi * freq * u + phase);
                for (int ch = 0; ch < spec.channels; ++ch) {
                    const size_t idx =
                        ((static_cast<size_t>(f) * spec.height + y) * spec.width + x) * spec.channels + ch;
                    frames.values[idx] = clamp01(base + rng.next_normal(0.0, kNoiseSigma));
                }
            }
}

// Hard-edged stripes in a parameter family disjoint from the appearance set
// (square waves, higher frequency band), also flip-safe by construction.
void fill_image_texture(const DatasetSpec& spec, int label, CounterRng& rng, Tensor& frames) {
    const bool vertical = (label % 2) == 0;
    const double freq = 4.0 + label / 2;
    const double phase = rng.next_uniform(0.0, 2.0 * std::numbers::pi);
    for (int f = 0; f < spec.frames; ++f)
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                const double u = (vertical ? x : y) / 16.0;
                const double wave = std::sin(2.0 * std::numbers::pi * freq * u + phase);
                const double base = wave >= 0.0 ? 0.8 : 0.2;
                for (int ch = 0; ch < spec.channels; ++ch) {
                    const size_t idx =
                        ((static_cast<size_t>(f) * spec.height + y) * spec.width + x) * spec.channels + ch;
                    frames.values[idx] = clamp01(base + rng.next_normal(0.0, kNoiseSigma));
                }
            }
}

void direction_for_class(int label, int classes, double& dx, double& dy) {
    // Classes come in reversal pairs: 2m moves along dir_m, 2m+1 along -dir_m.
    const int pair = label / 2;
    const double angle = std::numbers::pi * pair / (classes / 2);
    const double sign = (label % 2 == 0) ? 1.0 : -1.0;
    dx = sign * std::cos(angle);
    dy = sign * std::sin(angle);
}

}  // namespace

namespace {

double torus_dist(double a, double b, double extent) {
    double d = std::fabs(a - b);
    d = std::fmod(d, extent);
    return std::min(d, extent - d);
}

}  // namespace

Tensor render_motion_frames(int frames, int height, int width, int channels, double cx, double cy,
                            double dir_x, double dir_y, double speed, double blob_sigma) {
    // The blob lives on the frame torus: every frame of every class then shows
    // it at a uniformly distributed position, so no single frame can carry the
    // direction label.
    Tensor out(Shape{frames, height, width, channels});
    const double mid = (frames - 1) / 2.0;
    for (int f = 0; f < frames; ++f) {
        const double bx = cx + (f - mid) * speed * dir_x;
        const double by = cy + (f - mid) * speed * dir_y;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double ddx = torus_dist(x, bx, width);
                const double ddy = torus_dist(y, by, height);
                const double d2 = ddx * ddx + ddy * ddy;
                const double v = 0.15 + 0.7 * std::exp(-d2 / (2.0 * blob_sigma * blob_sigma));
                for (int ch = 0; ch < channels; ++ch)
                    out.values[((static_cast<size_t>(f) * height + y) * width + x) * channels + ch] = v;
            }
    }
    return out;
}

namespace {

// A blob translating in a class-determined direction. The trajectory midpoint
// is uniform on the frame torus, so reversing the frame order produces exactly
// the distribution of the paired class, and any single frame shows the blob at
// a class-independent uniform position.
void fill_motion(const DatasetSpec& spec, int label, CounterRng& rng, Tensor& frames) {
    double dx, dy;
    direction_for_class(label, spec.classes, dx, dy);
    const double cx = rng.next_uniform(0.0, static_cast<double>(spec.width));
    const double cy = rng.next_uniform(0.0, static_cast<double>(spec.height));
    Tensor clean = render_motion_frames(spec.frames, spec.height, spec.width, spec.channels, cx, cy, dx, dy,
                                        kBlobSpeed, kBlobSigma);
    for (size_t i = 0; i < frames.values.size(); ++i)
        frames.values[i] = clamp01(clean.values[i] + rng.next_normal(0.0, kNoiseSigma));
}

}  // namespace

std::string generator_kind_name(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::Appearance: return "appearance";
        case GeneratorKind::Motion: return "motion";
        case GeneratorKind::Image: return "image";
    }
    fail("bad generator kind");
}

GeneratorKind generator_kind_from_name(const std::string& s) {
    if (s == "appearance") return GeneratorKind::Appearance;
    if (s == "motion") return GeneratorKind::Motion;
    if (s == "image") return GeneratorKind::Image;
    fail("unknown dataset kind '", s, "' (expected appearance, motion or image)");
}

void DatasetSpec::validate() const {
    if (id.empty()) fail("dataset spec needs a non-empty id");
    if (classes < 2) fail("dataset '", id, "': needs >= 2 classes, got ", classes);
    if (kind == GeneratorKind::Motion && classes % 2 != 0)
        fail("dataset '", id, "': motion classes come in reversal pairs, got odd count ", classes);
    if (train_size < classes || eval_size < classes)
        fail("dataset '", id, "': split sizes (", train_size, "/", eval_size,
             ") must be >= class count ", classes);
    if (frames < 1 || height < 1 || width < 1 || channels < 1)
        fail("dataset '", id, "': bad clip dimensions");
    if (kind == GeneratorKind::Image && frames != 1)
        fail("dataset '", id, "': image datasets are single-frame, got frames=", frames);
    if (loss_weight < 0.0) fail("dataset '", id, "': loss weight must be >= 0");
}

Dataset::Dataset(DatasetSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

VideoClip Dataset::clip(Split split, int index) const {
    if (index < 0 || index >= size(split))
        fail("dataset '", spec_.id, "': clip index ", index, " outside split of ", size(split));
    VideoClip c;
    c.dataset_id = spec_.id;
    c.label = index % spec_.classes;  // balanced by construction
    c.frames = Tensor(Shape{spec_.frames, spec_.height, spec_.width, spec_.channels});
    CounterRng rng = clip_rng(spec_, split, index);
    switch (spec_.kind) {
        case GeneratorKind::Appearance: fill_appearance(spec_, c.label, rng, c.frames); break;
        case GeneratorKind::Motion: fill_motion(spec_, c.label, rng, c.frames); break;
        case GeneratorKind::Image: fill_image_texture(spec_, c.label, rng, c.frames); break;
    }
    return c;
}

int Dataset::reversal_class(int c) const {
    if (spec_.kind == GeneratorKind::Motion) return c ^ 1;
    return c;
}

void Registry::add(DatasetSpec spec) {
    if (has(spec.id)) fail("dataset id '", spec.id, "' registered twice");
    datasets_.push_back(std::make_unique<Dataset>(std::move(spec)));
}

bool Registry::has(const std::string& id) const {
    for (const auto& d : datasets_)
        if (d->spec().id == id) return true;
    return false;
}

const Dataset& Registry::at(const std::string& id) const {
    for (const auto& d : datasets_)
        if (d->spec().id == id) return *d;
    fail("unknown dataset '", id, "'");
}

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

Sampler::Sampler(const Registry& registry, const std::vector<std::string>& include, uint64_t seed)
    : seed_(seed), pick_rng_(CounterRng::derive(seed, rng_stream::kSampler)) {
    for (const std::string& id : include) {
        Source src;
        src.dataset = &registry.at(id);
        sources_.push_back(std::move(src));
        reshuffle(sources_.back());
        draw_counts_[id] = 0;
    }
    if (sources_.empty()) fail("sampler: no datasets to sample from");
}

void Sampler::reshuffle(Source& src) {
    const int n = src.dataset->spec().train_size;
    src.perm.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) src.perm[static_cast<size_t>(i)] = i;
    CounterRng rng = CounterRng(CounterRng::derive(seed_, rng_stream::kShuffle))
                         .stream(fnv1a(src.dataset->spec().id))
                         .stream(static_cast<uint64_t>(src.round));
    for (int i = n - 1; i > 0; --i) std::swap(src.perm[static_cast<size_t>(i)], src.perm[static_cast<size_t>(rng.next_int(i + 1))]);
    src.pos = 0;
}

Sampler::Draw Sampler::draw() {
    int64_t total = 0;
    for (const Source& s : sources_) total += s.dataset->spec().train_size;
    const double u = pick_rng_.next_double() * static_cast<double>(total);
    size_t chosen = sources_.size() - 1;
    double acc = 0.0;
    for (size_t i = 0; i < sources_.size(); ++i) {
        acc += static_cast<double>(sources_[i].dataset->spec().train_size);
        if (u < acc) {
            chosen = i;
            break;
        }
    }
    Source& src = sources_[chosen];
    if (src.pos >= static_cast<int64_t>(src.perm.size())) {
        ++src.round;
        reshuffle(src);
    }
    const int clip_index = src.perm[static_cast<size_t>(src.pos++)];
    ++total_draws_;
    ++draw_counts_[src.dataset->spec().id];
    return Draw{src.dataset, clip_index};
}

std::vector<Sampler::Draw> Sampler::compose_batch(int batch_size) {
    if (batch_size < 1) fail("sampler: batch size must be >= 1");
    std::vector<Draw> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) batch.push_back(draw());
    return batch;
}

std::map<std::string, std::pair<int64_t, int64_t>> Sampler::cursor_state() const {
    std::map<std::string, std::pair<int64_t, int64_t>> out;
    for (const Source& s : sources_) out[s.dataset->spec().id] = {s.round, s.pos};
    return out;
}

void Sampler::restore(int64_t total_draws,
                      const std::map<std::string, std::pair<int64_t, int64_t>>& cursors) {
    total_draws_ = total_draws;
    pick_rng_.seek(static_cast<uint64_t>(total_draws));
    for (Source& s : sources_) {
        auto it = cursors.find(s.dataset->spec().id);
        if (it == cursors.end()) fail("sampler restore: no cursor for dataset '", s.dataset->spec().id, "'");
        s.round = it->second.first;
        reshuffle(s);
        s.pos = it->second.second;
    }
}

// ---------------------------------------------------------------------------
// Clip transforms
// ---------------------------------------------------------------------------

VideoClip crop_clip(const VideoClip& clip, int oy, int ox, int crop_h, int crop_w) {
    const int n = clip.frames.shape[0], h = clip.frames.shape[1], w = clip.frames.shape[2],
              ch = clip.frames.shape[3];
    if (crop_h > h || crop_w > w) fail("crop ", crop_h, "x", crop_w, " exceeds frame ", h, "x", w);
    if (oy < 0 || ox < 0 || oy + crop_h > h || ox + crop_w > w)
        fail("crop offset (", oy, ", ", ox, ") out of bounds");
    VideoClip out;
    out.label = clip.label;
    out.dataset_id = clip.dataset_id;
    out.frames = Tensor(Shape{n, crop_h, crop_w, ch});
    for (int f = 0; f < n; ++f)
        for (int y = 0; y < crop_h; ++y)
            for (int x = 0; x < crop_w; ++x)
                for (int c = 0; c < ch; ++c)
                    out.frames.values[((static_cast<size_t>(f) * crop_h + y) * crop_w + x) * ch + c] =
                        clip.frames.values[((static_cast<size_t>(f) * h + oy + y) * w + ox + x) * ch + c];
    return out;
}

namespace {

VideoClip hflip(const VideoClip& clip) {
    const int n = clip.frames.shape[0], h = clip.frames.shape[1], w = clip.frames.shape[2],
              ch = clip.frames.shape[3];
    VideoClip out;
    out.label = clip.label;
    out.dataset_id = clip.dataset_id;
    out.frames = Tensor(clip.frames.shape);
    for (int f = 0; f < n; ++f)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < ch; ++c)
                    out.frames.values[((static_cast<size_t>(f) * h + y) * w + x) * ch + c] =
                        clip.frames.values[((static_cast<size_t>(f) * h + y) * w + (w - 1 - x)) * ch + c];
    return out;
}

}  // namespace

VideoClip augment(const VideoClip& clip, const DatasetSpec& spec, int crop_h, int crop_w, CounterRng& rng) {
    const int h = clip.frames.shape[1], w = clip.frames.shape[2];
    if (crop_h > h || crop_w > w)
        fail("augment: crop ", crop_h, "x", crop_w, " exceeds frame ", h, "x", w);
    const int oy = rng.next_int(h - crop_h + 1);
    const int ox = rng.next_int(w - crop_w + 1);
    VideoClip out = crop_clip(clip, oy, ox, crop_h, crop_w);
    if (spec.flip_allowed && rng.next_double() < 0.5) out = hflip(out);
    return out;
}

VideoClip reverse_frames(const VideoClip& clip) {
    const int n = clip.frames.shape[0];
    VideoClip out;
    out.label = clip.label;
    out.dataset_id = clip.dataset_id;
    out.frames = Tensor(clip.frames.shape);
    const size_t frame_sz = clip.frames.values.size() / static_cast<size_t>(n);
    for (int f = 0; f < n; ++f)
        std::copy_n(clip.frames.values.begin() + static_cast<size_t>(n - 1 - f) * frame_sz, frame_sz,
                    out.frames.values.begin() + static_cast<size_t>(f) * frame_sz);
    return out;
}

}  // namespace vtc
