#include "vtc/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "vtc/checkpoint.hpp"
#include "vtc/util.hpp"

namespace vtc {

std::vector<std::pair<int, int>> eval_crop_offsets(int h, int w, int crop_h, int crop_w, int views) {
    if (crop_h > h || crop_w > w)
        fail("evaluate: crop ", crop_h, "x", crop_w, " exceeds frames ", h, "x", w);
    if (views != 1 && views != 3) fail("evaluate: views must be 1 or 3, got ", views);
    const int cy = (h - crop_h) / 2, cx = (w - crop_w) / 2;
    if (views == 1) return {{cy, cx}};
    std::vector<std::pair<int, int>> offsets;
    if (w - crop_w >= h - crop_h) {
        // Landscape: sweep left / center / right, center vertically.
        offsets = {{cy, 0}, {cy, cx}, {cy, w - crop_w}};
    } else {
        offsets = {{0, cx}, {cy, cx}, {h - crop_h, cx}};
    }
    return offsets;
}

namespace {

uint64_t model_config_hash(const ModelConfig& cfg) { return fnv1a(model_config_to_json(cfg).dump()); }

std::vector<double> clip_probs(const ModelParams& params, const ModelConfig& cfg,
                               const std::string& dataset_id, const VideoClip& clip) {
    Tape tape;
    const TemporalMode mode =
        clip.frames.shape[0] == 1 ? TemporalMode::Degenerate : TemporalMode::Attention;
    Tensor features = forward_features(tape, params, cfg, clip.frames, mode);
    Tensor logits = classify(tape, params, cfg, dataset_id, features);
    Tensor probs = softmax_lastdim(tape, reshape(tape, logits, {1, static_cast<int>(logits.size())}));
    return probs.values;
}

}  // namespace

EvalResult evaluate_full(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                         const EvalOptions& opts) {
    const DatasetSpec& spec = dataset.spec();
    if (!cfg.find_head(spec.id)) fail("evaluate: no head for dataset '", spec.id, "'");
    const auto offsets =
        eval_crop_offsets(spec.height, spec.width, cfg.height, cfg.width, opts.views);
    const int count = dataset.size(Split::Eval);
    const int classes = spec.classes;

    EvalResult res;
    res.labels.resize(static_cast<size_t>(count));
    res.predictions.resize(static_cast<size_t>(count));
    res.view_probs.resize(static_cast<size_t>(count));

    auto eval_range = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            VideoClip clip = dataset.clip(Split::Eval, i);
            if (opts.transform) clip = opts.transform(clip);
            res.labels[static_cast<size_t>(i)] = clip.label;
            auto& views = res.view_probs[static_cast<size_t>(i)];
            views.reserve(offsets.size());
            std::vector<double> avg(static_cast<size_t>(classes), 0.0);
            for (const auto& [oy, ox] : offsets) {
                VideoClip view = crop_clip(clip, oy, ox, cfg.height, cfg.width);
                views.push_back(clip_probs(params, cfg, spec.id, view));
                for (int c = 0; c < classes; ++c) avg[static_cast<size_t>(c)] += views.back()[static_cast<size_t>(c)];
            }
            for (double& v : avg) v /= static_cast<double>(offsets.size());
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (avg[static_cast<size_t>(c)] > avg[static_cast<size_t>(best)]) best = c;  // ties keep the lowest index
            res.predictions[static_cast<size_t>(i)] = best;
        }
    };

    int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, std::max(1, count));
    if (threads == 1) {
        eval_range(0, count);
    } else {
        // Clips are independent; results land in per-index slots, so the
        // reduction below is identical regardless of scheduling.
        std::vector<std::thread> pool;
        const int chunk = (count + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const int begin = t * chunk, end = std::min(count, begin + chunk);
            if (begin < end) pool.emplace_back(eval_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    std::vector<int64_t> per_class_total(static_cast<size_t>(classes), 0), per_class_hit(static_cast<size_t>(classes), 0);
    int64_t hits = 0;
    for (int i = 0; i < count; ++i) {
        const int y = res.labels[static_cast<size_t>(i)];
        ++per_class_total[static_cast<size_t>(y)];
        if (res.predictions[static_cast<size_t>(i)] == y) {
            ++hits;
            ++per_class_hit[static_cast<size_t>(y)];
        }
    }
    res.report.dataset_id = spec.id;
    res.report.clip_count = count;
    res.report.views = opts.views;
    res.report.top1 = static_cast<double>(hits) / count;
    res.report.per_class.resize(static_cast<size_t>(classes), 0.0);
    for (int c = 0; c < classes; ++c)
        if (per_class_total[static_cast<size_t>(c)] > 0)
            res.report.per_class[static_cast<size_t>(c)] =
                static_cast<double>(per_class_hit[static_cast<size_t>(c)]) / per_class_total[static_cast<size_t>(c)];
    res.report.params_hash = hex64(params.hash());
    res.report.config_hash = hex64(model_config_hash(cfg));
    return res;
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                    const EvalOptions& opts) {
    return evaluate_full(params, cfg, dataset, opts).report;
}

double ProbeReport::value_at(const std::string& condition, const std::string& column) const {
    for (const Row& r : rows) {
        if (r.condition != condition) continue;
        for (size_t c = 0; c < columns.size(); ++c)
            if (columns[c] == column) return r.values[c];
    }
    fail("probe report has no cell (", condition, ", ", column, ")");
}

ProbeReport reversal_probe(const ModelParams& params, const ModelConfig& cfg, const Dataset& dataset,
                           int views) {
    const DatasetSpec& spec = dataset.spec();
    if (spec.modality() != Modality::Video)
        fail("reversal probe needs a video dataset; '", spec.id, "' is image-modality");

    EvalOptions normal_opts;
    normal_opts.views = views;
    EvalResult normal = evaluate_full(params, cfg, dataset, normal_opts);

    EvalOptions rev_opts;
    rev_opts.views = views;
    rev_opts.transform = [](const VideoClip& c) { return reverse_frames(c); };
    EvalResult reversed = evaluate_full(params, cfg, dataset, rev_opts);

    ProbeReport rep;
    rep.kind = "reversal";
    rep.subject = spec.id;
    rep.columns = {"top1"};
    rep.rows.push_back({"normal", {normal.report.top1}});
    rep.rows.push_back({"reversed", {reversed.report.top1}});

    bool has_pairs = false;
    for (int c = 0; c < spec.classes; ++c)
        if (dataset.reversal_class(c) != c) has_pairs = true;
    if (has_pairs) {
        int64_t hits = 0;
        for (size_t i = 0; i < reversed.predictions.size(); ++i)
            if (reversed.predictions[i] == dataset.reversal_class(reversed.labels[i])) ++hits;
        rep.rows.push_back({"reversed_remapped", {static_cast<double>(hits) / reversed.labels.size()}});
    }
    rep.deltas.push_back({"delta", reversed.report.top1 - normal.report.top1});
    rep.params_hash = normal.report.params_hash;
    rep.config_hash = normal.report.config_hash;
    return rep;
}

ProbeReport transfer_probe(ModelParams& params, const ModelConfig& cfg, const Registry& registry,
                           const std::string& target_id, const std::string& source_tag, int head_epochs,
                           const TrainConfig& base_cfg, int views) {
    const Dataset& target = registry.at(target_id);
    const DatasetSpec& spec = target.spec();

    ModelConfig tcfg_model = cfg;
    if (!tcfg_model.find_head(target_id))
        tcfg_model.head_table.push_back(HeadSpec{target_id, spec.classes});
    else if (tcfg_model.find_head(target_id)->classes != spec.classes)
        fail("transfer: head '", target_id, "' has ", tcfg_model.find_head(target_id)->classes,
             " classes, dataset has ", spec.classes);

    const uint64_t head_seed = CounterRng::derive(base_cfg.seed, fnv1a("transfer-head"));
    params.reinit_head(target_id, spec.classes, head_seed, base_cfg.precision == Precision::Single);

    Registry solo;
    solo.add(spec);

    TrainConfig tc = base_cfg;
    tc.stage = Stage::Cotrain;
    tc.epochs = head_epochs;
    tc.lr_drop_epochs.clear();
    tc.loss_weights = {{target_id, 1.0}};
    tc.trainable = TrainableMask::heads_only({target_id});

    Trainer trainer(params, tcfg_model, solo, tc, nullptr, "transfer");
    trainer.run();

    EvalOptions opts;
    opts.views = views;
    EvalReport rep = evaluate(params, tcfg_model, target, opts);

    ProbeReport out;
    out.kind = "transfer";
    out.subject = target_id;
    out.columns = {"top1"};
    out.rows.push_back({source_tag + "->" + target_id, {rep.top1}});
    out.params_hash = rep.params_hash;
    out.config_hash = rep.config_hash;
    return out;
}

std::vector<AblationRunSpec> default_ablation_runs(const Registry& registry) {
    std::vector<std::string> videos, images;
    for (const auto& d : registry.all()) {
        if (d->spec().modality() == Modality::Video)
            videos.push_back(d->spec().id);
        else
            images.push_back(d->spec().id);
    }
    std::vector<AblationRunSpec> runs;
    for (const std::string& v : videos) runs.push_back({"independent:" + v, {v}, {}});
    if (videos.size() >= 2) runs.push_back({"videos", videos, {}});
    if (!images.empty()) {
        std::vector<std::string> all = videos;
        all.insert(all.end(), images.begin(), images.end());
        for (double w : {0.0, 0.5, 0.75}) {
            AblationRunSpec run{"w_image=" + cat(w), all, {}};
            for (const std::string& im : images) run.weights[im] = w;
            runs.push_back(std::move(run));
        }
    }
    return runs;
}

ProbeReport ablation_matrix(const ModelConfig& model_template, const Registry& registry,
                            const std::vector<AblationRunSpec>& runs, const TrainConfig& tcfg,
                            uint64_t param_seed, int views) {
    if (runs.empty()) fail("ablation: empty run grid");

    ProbeReport rep;
    rep.kind = "ablation";
    rep.subject = "grid";
    for (const auto& d : registry.all()) rep.columns.push_back(d->spec().id);
    rep.config_hash = hex64(fnv1a(model_config_to_json(model_template).dump()));

    for (const AblationRunSpec& run : runs) {
        Registry sub;
        ModelConfig mcfg = model_template;
        mcfg.head_table.clear();
        for (const std::string& id : run.dataset_ids) {
            const DatasetSpec& spec = registry.at(id).spec();
            sub.add(spec);
            mcfg.head_table.push_back(HeadSpec{id, spec.classes});
        }
        TrainConfig tc = tcfg;
        for (const auto& [id, w] : run.weights) tc.loss_weights[id] = w;

        ModelParams params =
            ModelParams::init(mcfg, param_seed, tc.precision == Precision::Single);
        Trainer trainer(params, mcfg, sub, tc, nullptr, "ablation:" + run.label);
        trainer.run();

        ProbeReport::Row row{run.label, std::vector<double>(rep.columns.size(),
                                                            std::numeric_limits<double>::quiet_NaN())};
        for (const std::string& id : run.dataset_ids) {
            EvalOptions opts;
            opts.views = views;
            const EvalReport er = evaluate(params, mcfg, sub.at(id), opts);
            for (size_t c = 0; c < rep.columns.size(); ++c)
                if (rep.columns[c] == id) row.values[c] = er.top1;
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

void collect_metrics(const EvalReport& r, MetricBag& bag) { bag["top1:" + r.dataset_id] = r.top1; }

void collect_metrics(const ProbeReport& r, MetricBag& bag) {
    if (r.kind == "reversal") {
        for (const auto& row : r.rows) bag["reversal_" + row.condition + ":" + r.subject] = row.values[0];
        for (const auto& d : r.deltas) bag["reversal_" + d.name + ":" + r.subject] = d.value;
    } else if (r.kind == "transfer") {
        for (const auto& row : r.rows) bag["transfer:" + row.condition] = row.values[0];
    } else {
        for (const auto& row : r.rows)
            for (size_t c = 0; c < r.columns.size(); ++c)
                if (!std::isnan(row.values[c]))
                    bag["ablation:" + row.condition + ":" + r.columns[c]] = row.values[c];
    }
}

std::vector<std::string> check_thresholds(const std::vector<Threshold>& thresholds, const MetricBag& bag) {
    std::vector<std::string> failures;
    for (const Threshold& t : thresholds) {
        auto it = bag.find(t.metric);
        if (it == bag.end()) {
            failures.push_back(cat("threshold '", t.name, "': metric '", t.metric, "' was not produced"));
            continue;
        }
        if (t.min && it->second < *t.min)
            failures.push_back(cat("threshold '", t.name, "': ", t.metric, " = ", it->second,
                                   " below min ", *t.min));
        if (t.max && it->second > *t.max)
            failures.push_back(cat("threshold '", t.name, "': ", t.metric, " = ", it->second,
                                   " above max ", *t.max));
    }
    return failures;
}

}  // namespace vtc
