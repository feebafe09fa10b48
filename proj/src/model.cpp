#include "vtc/model.hpp"

#include <algorithm>
#include <cmath>

#include "vtc/rng.hpp"
#include "vtc/util.hpp"

namespace vtc {

std::string partition_name(Partition p) {
    switch (p) {
        case Partition::Spatial: return "spatial";
        case Partition::Temporal: return "temporal";
        case Partition::Head: return "head";
    }
    fail("bad partition value");
}

Partition partition_from_name(const std::string& s) {
    if (s == "spatial") return Partition::Spatial;
    if (s == "temporal") return Partition::Temporal;
    if (s == "head") return Partition::Head;
    fail("unknown partition '", s, "'");
}

const HeadSpec* ModelConfig::find_head(const std::string& dataset_id) const {
    for (const HeadSpec& h : head_table)
        if (h.dataset_id == dataset_id) return &h;
    return nullptr;
}

void ModelConfig::validate() const {
    if (blocks < 1) fail("model: blocks must be >= 1, got ", blocks);
    if (d_model < 1 || heads < 1) fail("model: d_model and heads must be >= 1");
    if (d_model % heads != 0) fail("model: d_model ", d_model, " not divisible by heads ", heads);
    if (patch < 1 || height % patch != 0 || width % patch != 0)
        fail("model: height ", height, " and width ", width, " must be divisible by patch ", patch);
    if (frames < 1) fail("model: frames must be >= 1, got ", frames);
    if (channels < 1) fail("model: channels must be >= 1");
    if (mlp_ratio < 1) fail("model: mlp_ratio must be >= 1");
    for (const HeadSpec& h : head_table) {
        if (h.classes < 2) fail("model: head '", h.dataset_id, "' needs >= 2 classes, got ", h.classes);
        int count = 0;
        for (const HeadSpec& o : head_table)
            if (o.dataset_id == h.dataset_id) ++count;
        if (count != 1) fail("model: duplicate head '", h.dataset_id, "'");
    }
}

bool ModelConfig::same_backbone(const ModelConfig& o) const {
    return blocks == o.blocks && d_model == o.d_model && heads == o.heads && patch == o.patch &&
           frames == o.frames && height == o.height && width == o.width && channels == o.channels &&
           mlp_ratio == o.mlp_ratio;
}

// ---------------------------------------------------------------------------
// TrainableMask
// ---------------------------------------------------------------------------

bool TrainableMask::includes(const ParamEntry& e) const {
    switch (e.partition) {
        case Partition::Spatial: return spatial;
        case Partition::Temporal: return temporal;
        case Partition::Head:
            if (all_heads) return true;
            return std::find(heads.begin(), heads.end(), e.head_id) != heads.end();
    }
    return false;
}

TrainableMask TrainableMask::all() { return TrainableMask{}; }

TrainableMask TrainableMask::spatial_and_heads(std::vector<std::string> head_ids) {
    TrainableMask m;
    m.spatial = true;
    m.temporal = false;
    m.all_heads = false;
    m.heads = std::move(head_ids);
    return m;
}

TrainableMask TrainableMask::heads_only(std::vector<std::string> head_ids) {
    TrainableMask m;
    m.spatial = false;
    m.temporal = false;
    m.all_heads = false;
    m.heads = std::move(head_ids);
    return m;
}

// ---------------------------------------------------------------------------
// Parameter construction
// ---------------------------------------------------------------------------

namespace {

// Every parameter draws from its own stream keyed by (seed, name), so the
// initial value of one parameter never depends on which other parameters
// exist. Adding a head leaves the backbone init bit-identical.
CounterRng param_rng(uint64_t seed, const std::string& name) {
    return CounterRng(CounterRng::derive(seed, rng_stream::kParamInit)).stream(fnv1a(name));
}

Tensor uniform_fan_in(uint64_t seed, const std::string& name, Shape shape, int fan_in, bool q) {
    CounterRng rng = param_rng(seed, name);
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values) {
        v = rng.next_uniform(-bound, bound);
        if (q) v = round_f32(v);
    }
    return t;
}

Tensor small_normal(uint64_t seed, const std::string& name, Shape shape, bool q) {
    CounterRng rng = param_rng(seed, name);
    Tensor t(std::move(shape));
    for (double& v : t.values) {
        v = rng.next_normal(0.0, 0.02);
        if (q) v = round_f32(v);
    }
    return t;
}

}  // namespace

void ModelParams::push(std::string name, Partition p, std::string head_id, Tensor t) {
    entries_.push_back(ParamEntry{std::move(name), p, std::move(head_id), std::move(t)});
}

ModelParams make_params_for_entries(std::vector<ParamEntry> entries) {
    ModelParams p;
    p.entries_ = std::move(entries);
    return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed, bool q) {
    cfg.validate();
    ModelParams p;
    const int d = cfg.d_model;
    const int s = cfg.patches_per_frame();
    const int patch_dim = cfg.patch * cfg.patch * cfg.channels;

    p.push("embed.patch.weight", Partition::Spatial, "",
           uniform_fan_in(seed, "embed.patch.weight", {patch_dim, d}, patch_dim, q));
    p.push("embed.patch.bias", Partition::Spatial, "", Tensor::zeros({d}));
    p.push("embed.pos_spatial", Partition::Spatial, "", small_normal(seed, "embed.pos_spatial", {s, d}, q));
    p.push("embed.pos_temporal", Partition::Spatial, "",
           small_normal(seed, "embed.pos_temporal", {cfg.frames, d}, q));
    p.push("embed.class_token", Partition::Spatial, "", small_normal(seed, "embed.class_token", {1, d}, q));

    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string blk = "block" + std::to_string(b) + ".";
        auto norm = [&](const std::string& which) {
            p.push(blk + which + ".gain", Partition::Spatial, "", Tensor::full({d}, 1.0));
            p.push(blk + which + ".bias", Partition::Spatial, "", Tensor::zeros({d}));
        };
        auto attn = [&](const std::string& which, Partition part) {
            for (const char* w : {"wq", "wk", "wv", "wo"}) {
                const std::string name = blk + which + "." + w;
                p.push(name, part, "", uniform_fan_in(seed, name, {d, d}, d, q));
            }
            for (const char* b2 : {"bq", "bk", "bv", "bo"})
                p.push(blk + which + "." + b2, part, "", Tensor::zeros({d}));
        };
        norm("norm_temporal");
        attn("attn_temporal", Partition::Temporal);
        norm("norm_spatial");
        attn("attn_spatial", Partition::Spatial);
        norm("norm_mlp");
        const int hidden = cfg.mlp_ratio * d;
        p.push(blk + "mlp.w1", Partition::Spatial, "",
               uniform_fan_in(seed, blk + "mlp.w1", {d, hidden}, d, q));
        p.push(blk + "mlp.b1", Partition::Spatial, "", Tensor::zeros({hidden}));
        p.push(blk + "mlp.w2", Partition::Spatial, "",
               uniform_fan_in(seed, blk + "mlp.w2", {hidden, d}, hidden, q));
        p.push(blk + "mlp.b2", Partition::Spatial, "", Tensor::zeros({d}));
    }

    p.push("final_norm.gain", Partition::Spatial, "", Tensor::full({d}, 1.0));
    p.push("final_norm.bias", Partition::Spatial, "", Tensor::zeros({d}));

    for (const HeadSpec& h : cfg.head_table) p.add_head(h.dataset_id, h.classes, seed, q);
    return p;
}

void ModelParams::add_head(const std::string& dataset_id, int classes, uint64_t seed, bool q) {
    const std::string wname = "head." + dataset_id + ".weight";
    if (has(wname)) fail("head '", dataset_id, "' already exists");
    int d = 0;
    for (const ParamEntry& e : entries_)
        if (e.name == "embed.patch.bias") d = static_cast<int>(e.tensor.size());
    if (d == 0) fail("cannot add a head before backbone parameters exist");
    push(wname, Partition::Head, dataset_id, uniform_fan_in(seed, wname, {d, classes}, d, q));
    push("head." + dataset_id + ".bias", Partition::Head, dataset_id, Tensor::zeros({classes}));
}

void ModelParams::reinit_head(const std::string& dataset_id, int classes, uint64_t seed, bool q) {
    const std::string wname = "head." + dataset_id + ".weight";
    const std::string bname = "head." + dataset_id + ".bias";
    if (!has(wname)) {
        add_head(dataset_id, classes, seed, q);
        return;
    }
    Tensor& w = at(wname);
    if (w.shape[1] != classes)
        fail("head '", dataset_id, "' has ", w.shape[1], " classes, target needs ", classes);
    const int d = w.shape[0];
    w = uniform_fan_in(seed, wname, {d, classes}, d, q);
    at(bname) = Tensor::zeros({classes});
}

Tensor& ModelParams::at(const std::string& name) {
    for (ParamEntry& e : entries_)
        if (e.name == name) return e.tensor;
    fail("unknown parameter '", name, "'");
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const ParamEntry& e : entries_)
        if (e.name == name) return e.tensor;
    fail("unknown parameter '", name, "'");
}

bool ModelParams::has(const std::string& name) const {
    for (const ParamEntry& e : entries_)
        if (e.name == name) return true;
    return false;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::select(const TrainableMask& mask) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (ParamEntry& e : entries_)
        if (mask.includes(e)) out.emplace_back(e.name, &e.tensor);
    return out;
}

int64_t ModelParams::value_count(std::optional<Partition> p) const {
    int64_t n = 0;
    for (const ParamEntry& e : entries_)
        if (!p || e.partition == *p) n += e.tensor.size();
    return n;
}

uint64_t ModelParams::hash(std::optional<Partition> p) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const ParamEntry& e : entries_) {
        if (p && e.partition != *p) continue;
        h = fnv1a(e.name, h);
        h = fnv1a(e.tensor.values.data(), e.tensor.values.size() * sizeof(double), h);
    }
    return h;
}

uint64_t ModelParams::head_hash(const std::string& dataset_id) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const ParamEntry& e : entries_) {
        if (e.partition != Partition::Head || e.head_id != dataset_id) continue;
        h = fnv1a(e.name, h);
        h = fnv1a(e.tensor.values.data(), e.tensor.values.size() * sizeof(double), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

AttnParams attn_params(const ModelParams& params, const std::string& prefix) {
    return AttnParams{&params.at(prefix + ".wq"), &params.at(prefix + ".wk"),
                      &params.at(prefix + ".wv"), &params.at(prefix + ".wo"),
                      &params.at(prefix + ".bq"), &params.at(prefix + ".bk"),
                      &params.at(prefix + ".bv"), &params.at(prefix + ".bo")};
}

namespace {

// Shared by the single-clip and batched paths: validates one clip and writes
// its flattened patches into `pixels` starting at patch row `row0`.
int check_clip_frames(const ModelConfig& cfg, const Tensor& clip) {
    if (clip.rank() != 4)
        fail("patchify: clip must be [frames, height, width, channels], got ", shape_str(clip.shape));
    const int n = clip.shape[0];
    if (clip.shape[1] != cfg.height || clip.shape[2] != cfg.width || clip.shape[3] != cfg.channels)
        fail("patchify: clip ", shape_str(clip.shape), " does not match model input ", cfg.frames, "x",
             cfg.height, "x", cfg.width, "x", cfg.channels);
    if (n != cfg.frames && n != 1)
        fail("patchify: clip has ", n, " frames; model expects ", cfg.frames, " (or 1 for images)");
    return n;
}

void fill_patch_rows(const ModelConfig& cfg, const Tensor& clip, int n, Tensor& pixels, int row0) {
    const int p = cfg.patch, px = cfg.patches_x(), py = cfg.patches_y();
    const int s = cfg.patches_per_frame();
    const int patch_dim = p * p * cfg.channels;
    for (int f = 0; f < n; ++f) {
        for (int gy = 0; gy < py; ++gy) {
            for (int gx = 0; gx < px; ++gx) {
                const int patch_row = row0 + f * s + gy * px + gx;
                double* dst = pixels.values.data() + static_cast<size_t>(patch_row) * patch_dim;
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        for (int ch = 0; ch < cfg.channels; ++ch)
                            *dst++ = clip.values[((static_cast<size_t>(f) * cfg.height + gy * p + dy) * cfg.width +
                                                  gx * p + dx) *
                                                     cfg.channels +
                                                 ch];
            }
        }
    }
}

TokenGrid patchify_clips(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                         const std::vector<const Tensor*>& clips) {
    if (clips.empty()) fail("patchify: empty clip batch");
    const int n = check_clip_frames(cfg, *clips[0]);
    for (const Tensor* c : clips)
        if (check_clip_frames(cfg, *c) != n) fail("patchify: mixed frame counts in one batch");
    const int b = static_cast<int>(clips.size());
    const int s = cfg.patches_per_frame(), t_per = cfg.tokens_per_frame();
    const int patch_dim = cfg.patch * cfg.patch * cfg.channels;

    // Patch pixel matrix [b*n*s x patch_dim] (a constant w.r.t. the record).
    Tensor pixels(Shape{b * n * s, patch_dim});
    for (int c = 0; c < b; ++c) fill_patch_rows(cfg, *clips[static_cast<size_t>(c)], n, pixels, c * n * s);

    Tensor tokens = bias_add(tape, matmul(tape, pixels, params.at("embed.patch.weight")),
                             params.at("embed.patch.bias"));

    std::vector<int> spatial_idx, temporal_idx;
    spatial_idx.reserve(static_cast<size_t>(b) * n * s);
    temporal_idx.reserve(static_cast<size_t>(b) * n * s);
    for (int c = 0; c < b; ++c)
        for (int f = 0; f < n; ++f)
            for (int j = 0; j < s; ++j) {
                spatial_idx.push_back(j);
                temporal_idx.push_back(f);
            }
    tokens = add(tape, tokens, gather_rows(tape, params.at("embed.pos_spatial"), spatial_idx));
    tokens = add(tape, tokens, gather_rows(tape, params.at("embed.pos_temporal"), temporal_idx));

    Tensor cls =
        gather_rows(tape, params.at("embed.class_token"), std::vector<int>(static_cast<size_t>(b) * n, 0));

    std::vector<int> patch_rows, cls_rows;
    patch_rows.reserve(static_cast<size_t>(b) * n * s);
    cls_rows.reserve(static_cast<size_t>(b) * n);
    for (int c = 0; c < b; ++c)
        for (int f = 0; f < n; ++f) {
            cls_rows.push_back((c * n + f) * t_per);
            for (int j = 0; j < s; ++j) patch_rows.push_back((c * n + f) * t_per + 1 + j);
        }
    Tensor grid = add(tape, scatter_rows(tape, tokens, patch_rows, b * n * t_per),
                      scatter_rows(tape, cls, cls_rows, b * n * t_per));
    Shape grid_shape = b == 1 ? Shape{n, t_per, cfg.d_model} : Shape{b, n, t_per, cfg.d_model};
    return TokenGrid{reshape(tape, grid, std::move(grid_shape)), n, t_per, b};
}

}  // namespace

TokenGrid patchify(Tape& tape, const ModelParams& params, const ModelConfig& cfg, const Tensor& clip) {
    return patchify_clips(tape, params, cfg, {&clip});
}

Tensor attention_mix(Tape& tape, const Tensor& queries, const Tensor& keys, const Tensor& values,
                     int groups, int heads) {
    const int d = queries.cols();
    if (keys.cols() != d || values.cols() != d) fail("attention_mix: feature widths disagree");
    if (d % heads != 0) fail("attention_mix: width ", d, " not divisible by ", heads, " heads");
    if (groups < 1 || queries.rows() % groups != 0 || keys.rows() % groups != 0)
        fail("attention_mix: rows not divisible into ", groups, " groups");
    if (keys.rows() != values.rows())
        fail("attention_mix: key set size ", keys.rows(), " != value set size ", values.rows());
    const int tq = queries.rows() / groups;
    const int tk = keys.rows() / groups;
    const int dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    if (!queries.all_finite() || !keys.all_finite()) fail("attention_mix: non-finite input rejected");

    const int nq = tape.input_id(queries), nk = tape.input_id(keys), nv = tape.input_id(values);
    Tensor out(Shape{groups * tq, d});

    // Softmax weights saved for the backward pass: per group, per head, [tq x tk].
    std::vector<double> attn(static_cast<size_t>(groups) * heads * tq * tk);
    std::vector<double> qh(static_cast<size_t>(tq) * dh), kh(static_cast<size_t>(tk) * dh),
        vh(static_cast<size_t>(tk) * dh);
    for (int g = 0; g < groups; ++g) {
        for (int h = 0; h < heads; ++h) {
            for (int r = 0; r < tq; ++r)
                for (int c = 0; c < dh; ++c)
                    qh[static_cast<size_t>(r) * dh + c] =
                        queries.values[(static_cast<size_t>(g) * tq + r) * d + h * dh + c];
            for (int r = 0; r < tk; ++r)
                for (int c = 0; c < dh; ++c) {
                    kh[static_cast<size_t>(r) * dh + c] =
                        keys.values[(static_cast<size_t>(g) * tk + r) * d + h * dh + c];
                    vh[static_cast<size_t>(r) * dh + c] =
                        values.values[(static_cast<size_t>(g) * tk + r) * d + h * dh + c];
                }
            double* a = attn.data() + ((static_cast<size_t>(g) * heads + h) * tq) * tk;
            std::fill(a, a + static_cast<size_t>(tq) * tk, 0.0);
            kernel::matmul_nt(qh.data(), kh.data(), a, tq, dh, tk);
            for (int r = 0; r < tq; ++r) {
                double* row = a + static_cast<size_t>(r) * tk;
                double mx = row[0] * inv_sqrt;
                for (int c = 0; c < tk; ++c) mx = std::max(mx, row[c] * inv_sqrt);
                double sum = 0.0;
                for (int c = 0; c < tk; ++c) {
                    row[c] = std::exp(row[c] * inv_sqrt - mx);
                    sum += row[c];
                }
                for (int c = 0; c < tk; ++c) row[c] /= sum;
            }
            // out rows of this group/head: A [tq x tk] * V_h [tk x dh].
            for (int r = 0; r < tq; ++r) {
                const double* arow = a + static_cast<size_t>(r) * tk;
                double* orow = out.values.data() + (static_cast<size_t>(g) * tq + r) * d + h * dh;
                for (int c2 = 0; c2 < tk; ++c2) {
                    const double w = arow[c2];
                    const double* vrow = vh.data() + static_cast<size_t>(c2) * dh;
                    for (int c = 0; c < dh; ++c) orow[c] += w * vrow[c];
                }
            }
        }
    }

    std::vector<double> q_saved = queries.values, k_saved = keys.values, v_saved = values.values;
    if (nq < 0 && nk < 0 && nv < 0) return out;
    Tape::BackwardFn fn =
        [nq, nk, nv, groups, heads, tq, tk, d, dh, inv_sqrt, attn = std::move(attn),
         q_saved = std::move(q_saved), k_saved = std::move(k_saved),
         v_saved = std::move(v_saved)](Tape& t, int self) {
            const auto& g_out = t.grad(self);
            std::vector<double>* gq = nq >= 0 ? &t.grad(nq) : nullptr;
            std::vector<double>* gk = nk >= 0 ? &t.grad(nk) : nullptr;
            std::vector<double>* gv = nv >= 0 ? &t.grad(nv) : nullptr;
            std::vector<double> da(static_cast<size_t>(tq) * tk), ds(static_cast<size_t>(tq) * tk);
            for (int g = 0; g < groups; ++g) {
                for (int h = 0; h < heads; ++h) {
                    const double* a = attn.data() + ((static_cast<size_t>(g) * heads + h) * tq) * tk;
                    // dV_h += A^T dO_h
                    if (gv) {
                        for (int r = 0; r < tq; ++r) {
                            const double* orow = g_out.data() + (static_cast<size_t>(g) * tq + r) * d + h * dh;
                            const double* arow = a + static_cast<size_t>(r) * tk;
                            for (int c2 = 0; c2 < tk; ++c2) {
                                double* vrow =
                                    gv->data() + (static_cast<size_t>(g) * tk + c2) * d + h * dh;
                                const double w = arow[c2];
                                for (int c = 0; c < dh; ++c) vrow[c] += w * orow[c];
                            }
                        }
                    }
                    if (!gq && !gk) continue;
                    // dA = dO_h V_h^T, then softmax backward to dS.
                    for (int r = 0; r < tq; ++r) {
                        const double* orow = g_out.data() + (static_cast<size_t>(g) * tq + r) * d + h * dh;
                        for (int c2 = 0; c2 < tk; ++c2) {
                            const double* vrow =
                                v_saved.data() + (static_cast<size_t>(g) * tk + c2) * d + h * dh;
                            double acc = 0.0;
                            for (int c = 0; c < dh; ++c) acc += orow[c] * vrow[c];
                            da[static_cast<size_t>(r) * tk + c2] = acc;
                        }
                    }
                    for (int r = 0; r < tq; ++r) {
                        const double* arow = a + static_cast<size_t>(r) * tk;
                        const double* darow = da.data() + static_cast<size_t>(r) * tk;
                        double dot = 0.0;
                        for (int c2 = 0; c2 < tk; ++c2) dot += arow[c2] * darow[c2];
                        double* dsrow = ds.data() + static_cast<size_t>(r) * tk;
                        for (int c2 = 0; c2 < tk; ++c2)
                            dsrow[c2] = arow[c2] * (darow[c2] - dot) * inv_sqrt;
                    }
                    // dQ_h += dS K_h ; dK_h += dS^T Q_h
                    if (gq) {
                        for (int r = 0; r < tq; ++r) {
                            double* qrow = gq->data() + (static_cast<size_t>(g) * tq + r) * d + h * dh;
                            const double* dsrow = ds.data() + static_cast<size_t>(r) * tk;
                            for (int c2 = 0; c2 < tk; ++c2) {
                                const double* krow =
                                    k_saved.data() + (static_cast<size_t>(g) * tk + c2) * d + h * dh;
                                const double w = dsrow[c2];
                                for (int c = 0; c < dh; ++c) qrow[c] += w * krow[c];
                            }
                        }
                    }
                    if (gk) {
                        for (int r = 0; r < tq; ++r) {
                            const double* qrow =
                                q_saved.data() + (static_cast<size_t>(g) * tq + r) * d + h * dh;
                            const double* dsrow = ds.data() + static_cast<size_t>(r) * tk;
                            for (int c2 = 0; c2 < tk; ++c2) {
                                double* krow = gk->data() + (static_cast<size_t>(g) * tk + c2) * d + h * dh;
                                const double w = dsrow[c2];
                                for (int c = 0; c < dh; ++c) krow[c] += w * qrow[c];
                            }
                        }
                    }
                }
            }
        };
    out.node = tape.record(out.size(), {nq, nk, nv}, std::move(fn));
    out.tape_serial = tape.serial();
    return out;
}

Tensor mha(Tape& tape, const AttnParams& p, const Tensor& queries, const Tensor& keys,
           const Tensor& values, int heads) {
    const int d = p.wq->shape[0];
    if (queries.cols() != d || keys.cols() != d || values.cols() != d)
        fail("mha: token width must equal d_model ", d);
    if (keys.rows() != values.rows())
        fail("mha: key set size ", keys.rows(), " != value set size ", values.rows());
    if (d % heads != 0) fail("mha: width ", d, " not divisible by ", heads, " heads");

    Tensor q = bias_add(tape, matmul(tape, queries, *p.wq), *p.bq);
    Tensor k = bias_add(tape, matmul(tape, keys, *p.wk), *p.bk);
    Tensor v = bias_add(tape, matmul(tape, values, *p.wv), *p.bv);
    Tensor mixed = attention_mix(tape, q, k, v, 1, heads);
    return bias_add(tape, matmul(tape, mixed, *p.wo), *p.bo);
}

Tensor mha_degenerate(Tape& tape, const AttnParams& p, const Tensor& values) {
    Tensor v = bias_add(tape, matmul(tape, values, *p.wv), *p.bv);
    return bias_add(tape, matmul(tape, v, *p.wo), *p.bo);
}

namespace {

Tensor grid_2d(Tape& tape, const TokenGrid& g, int d) {
    return reshape(tape, g.tokens, {g.clips * g.frames * g.tokens_per_frame, d});
}

}  // namespace

TokenGrid block_forward(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                        int block_index, const TokenGrid& grid, TemporalMode mode) {
    const int d = cfg.d_model;
    const int n = grid.frames, t_per = grid.tokens_per_frame, s = t_per - 1, b = grid.clips;
    const std::string blk = "block" + std::to_string(block_index) + ".";
    Tensor x = grid_2d(tape, grid, d);

    // Temporal sublayer: rows of a group share a clip and a patch index and
    // run across the frames. Class tokens are excluded from temporal mixing.
    {
        Tensor u = layer_norm(tape, x, params.at(blk + "norm_temporal.gain"),
                              params.at(blk + "norm_temporal.bias"), kLayerNormEps);
        const AttnParams ap = attn_params(params, blk + "attn_temporal");
        std::vector<int> patch_rows;  // group-major: clip, then patch index, frames contiguous
        patch_rows.reserve(static_cast<size_t>(b) * n * s);
        for (int c = 0; c < b; ++c)
            for (int j = 0; j < s; ++j)
                for (int f = 0; f < n; ++f) patch_rows.push_back((c * n + f) * t_per + 1 + j);
        Tensor u_patch = gather_rows(tape, u, patch_rows);
        Tensor out;
        if (mode == TemporalMode::Degenerate) {
            out = mha_degenerate(tape, ap, u_patch);
        } else {
            Tensor q = bias_add(tape, matmul(tape, u_patch, *ap.wq), *ap.bq);
            Tensor k = bias_add(tape, matmul(tape, u_patch, *ap.wk), *ap.bk);
            Tensor v = bias_add(tape, matmul(tape, u_patch, *ap.wv), *ap.bv);
            Tensor mixed = attention_mix(tape, q, k, v, b * s, cfg.heads);
            out = bias_add(tape, matmul(tape, mixed, *ap.wo), *ap.bo);
        }
        x = add(tape, x, scatter_rows(tape, out, patch_rows, b * n * t_per));
    }

    // Spatial sublayer: one group per (clip, frame); the grid is already
    // frame-major, class token included.
    {
        Tensor u = layer_norm(tape, x, params.at(blk + "norm_spatial.gain"),
                              params.at(blk + "norm_spatial.bias"), kLayerNormEps);
        const AttnParams ap = attn_params(params, blk + "attn_spatial");
        Tensor q = bias_add(tape, matmul(tape, u, *ap.wq), *ap.bq);
        Tensor k = bias_add(tape, matmul(tape, u, *ap.wk), *ap.bk);
        Tensor v = bias_add(tape, matmul(tape, u, *ap.wv), *ap.bv);
        Tensor mixed = attention_mix(tape, q, k, v, b * n, cfg.heads);
        x = add(tape, x, bias_add(tape, matmul(tape, mixed, *ap.wo), *ap.bo));
    }

    // MLP sublayer.
    {
        Tensor u = layer_norm(tape, x, params.at(blk + "norm_mlp.gain"),
                              params.at(blk + "norm_mlp.bias"), kLayerNormEps);
        Tensor h = gelu(tape, bias_add(tape, matmul(tape, u, params.at(blk + "mlp.w1")),
                                       params.at(blk + "mlp.b1")));
        Tensor o = bias_add(tape, matmul(tape, h, params.at(blk + "mlp.w2")), params.at(blk + "mlp.b2"));
        x = add(tape, x, o);
    }

    Shape out_shape = b == 1 ? Shape{n, t_per, d} : Shape{b, n, t_per, d};
    return TokenGrid{reshape(tape, x, std::move(out_shape)), n, t_per, b};
}

Tensor forward_features_batch(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<const Tensor*>& clips, TemporalMode mode) {
    TokenGrid grid = patchify_clips(tape, params, cfg, clips);
    for (int blk = 0; blk < cfg.blocks; ++blk) grid = block_forward(tape, params, cfg, blk, grid, mode);

    const int n = grid.frames, t_per = grid.tokens_per_frame, b = grid.clips, d = cfg.d_model;
    std::vector<int> cls_rows;
    cls_rows.reserve(static_cast<size_t>(b) * n);
    for (int c = 0; c < b; ++c)
        for (int f = 0; f < n; ++f) cls_rows.push_back((c * n + f) * t_per);
    Tensor cls = gather_rows(tape, grid_2d(tape, grid, d), cls_rows);
    Tensor normed =
        layer_norm(tape, cls, params.at("final_norm.gain"), params.at("final_norm.bias"), kLayerNormEps);
    // Per-clip mean over frames.
    Tensor averager(Shape{b, b * n});
    for (int c = 0; c < b; ++c)
        for (int f = 0; f < n; ++f) averager.values[static_cast<size_t>(c) * b * n + c * n + f] = 1.0 / n;
    return matmul(tape, averager, normed);
}

Tensor forward_features(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                        const Tensor& clip, TemporalMode mode) {
    Tensor features = forward_features_batch(tape, params, cfg, {&clip}, mode);
    return reshape(tape, features, {cfg.d_model});
}

Tensor classify_batch(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                      const std::string& dataset_id, const Tensor& features) {
    const HeadSpec* head = cfg.find_head(dataset_id);
    if (!head) fail("classify: no head registered for dataset '", dataset_id, "'");
    const Tensor& w = params.at("head." + dataset_id + ".weight");
    const Tensor& b = params.at("head." + dataset_id + ".bias");
    return bias_add(tape, matmul(tape, features, w), b);
}

Tensor classify(Tape& tape, const ModelParams& params, const ModelConfig& cfg,
                const std::string& dataset_id, const Tensor& features) {
    const HeadSpec* head = cfg.find_head(dataset_id);
    if (!head) fail("classify: no head registered for dataset '", dataset_id, "'");
    Tensor logits = classify_batch(tape, params, cfg, dataset_id,
                                   reshape(tape, features, {1, cfg.d_model}));
    return reshape(tape, logits, {head->classes});
}

}  // namespace vtc
