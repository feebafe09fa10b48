#include "vtc/experiment.hpp"

#include <algorithm>
#include <iostream>
#include <set>

#include "vtc/checkpoint.hpp"
#include "vtc/report.hpp"
#include "vtc/util.hpp"

namespace vtc {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail("section '", section, "' must be an object");
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) fail("unknown key '", k, "' in section '", section, "'");
}

const json& require(const json& obj, const std::string& section, const char* key) {
    if (!obj.contains(key)) fail("missing required key '", key, "' in section '", section, "'");
    return obj.at(key);
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

DatasetSpec parse_dataset(const json& j, const std::string& section, uint64_t run_seed) {
    check_keys(j, section,
               {"id", "name", "kind", "classes", "train_size", "eval_size", "flip_allowed",
                "loss_weight", "seed", "frames", "height", "width", "channels"});
    DatasetSpec spec;
    spec.id = require(j, section, "id").get<std::string>();
    spec.kind = generator_kind_from_name(require(j, section, "kind").get<std::string>());

    // Defaults by generator kind.
    if (spec.kind == GeneratorKind::Image) {
        spec.classes = 8;
        spec.train_size = 4000;
        spec.frames = 1;
        spec.loss_weight = 0.5;
    }
    if (spec.kind == GeneratorKind::Motion) spec.flip_allowed = false;
    spec.name = spec.id;
    spec.seed = CounterRng::derive(run_seed, fnv1a(spec.id));

    read_opt(j, "name", spec.name);
    read_opt(j, "classes", spec.classes);
    read_opt(j, "train_size", spec.train_size);
    read_opt(j, "eval_size", spec.eval_size);
    read_opt(j, "flip_allowed", spec.flip_allowed);
    read_opt(j, "loss_weight", spec.loss_weight);
    read_opt(j, "seed", spec.seed);
    read_opt(j, "frames", spec.frames);
    read_opt(j, "height", spec.height);
    read_opt(j, "width", spec.width);
    read_opt(j, "channels", spec.channels);
    spec.validate();
    return spec;
}

TrainableMask parse_trainable(const json& arr) {
    TrainableMask m;
    m.spatial = m.temporal = false;
    m.all_heads = false;
    for (const auto& tok : arr) {
        const std::string s = tok.get<std::string>();
        if (s == "spatial")
            m.spatial = true;
        else if (s == "temporal")
            m.temporal = true;
        else if (s == "heads")
            m.all_heads = true;
        else if (s.rfind("head:", 0) == 0)
            m.heads.push_back(s.substr(5));
        else
            fail("unknown trainable token '", s, "' in section 'train' (expected spatial, temporal, heads or head:<id>)");
    }
    return m;
}

json trainable_to_json(const TrainableMask& m) {
    json arr = json::array();
    if (m.spatial) arr.push_back("spatial");
    if (m.temporal) arr.push_back("temporal");
    if (m.all_heads)
        arr.push_back("heads");
    else
        for (const std::string& h : m.heads) arr.push_back("head:" + h);
    return arr;
}

}  // namespace

Registry ExperimentConfig::build_registry() const {
    Registry reg;
    for (const DatasetSpec& spec : datasets) reg.add(spec);
    return reg;
}

ExperimentConfig parse_experiment_config(const json& j, std::optional<uint64_t> seed_override) {
    check_keys(j, "(root)", {"model", "datasets", "train", "eval", "io"});
    ExperimentConfig cfg;

    if (j.contains("io")) {
        const json& io = j.at("io");
        check_keys(io, "io", {"run_dir", "seed"});
        read_opt(io, "run_dir", cfg.io.run_dir);
        read_opt(io, "seed", cfg.io.seed);
    }
    if (seed_override) cfg.io.seed = *seed_override;

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model",
                   {"blocks", "d_model", "heads", "patch", "frames", "height", "width", "channels",
                    "mlp_ratio"});
        read_opt(m, "blocks", cfg.model.blocks);
        read_opt(m, "d_model", cfg.model.d_model);
        read_opt(m, "heads", cfg.model.heads);
        read_opt(m, "patch", cfg.model.patch);
        read_opt(m, "frames", cfg.model.frames);
        read_opt(m, "height", cfg.model.height);
        read_opt(m, "width", cfg.model.width);
        read_opt(m, "channels", cfg.model.channels);
        read_opt(m, "mlp_ratio", cfg.model.mlp_ratio);
    }

    if (j.contains("datasets")) {
        const json& ds = j.at("datasets");
        if (!ds.is_array()) fail("section 'datasets' must be an array");
        for (size_t i = 0; i < ds.size(); ++i)
            cfg.datasets.push_back(parse_dataset(ds[i], cat("datasets[", i, "]"), cfg.io.seed));
    }
    for (const DatasetSpec& spec : cfg.datasets)
        cfg.model.head_table.push_back(HeadSpec{spec.id, spec.classes});
    cfg.model.validate();

    cfg.train.seed = cfg.io.seed;
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train",
                   {"stage", "epochs", "batch_size", "base_lr", "lr_drop_epochs", "lr_drop_factor",
                    "momentum", "loss_weights", "seed", "precision", "trainable", "log_every"});
        if (t.contains("stage")) cfg.train.stage = stage_from_name(t.at("stage").get<std::string>());
        read_opt(t, "epochs", cfg.train.epochs);
        read_opt(t, "batch_size", cfg.train.batch_size);
        read_opt(t, "base_lr", cfg.train.base_lr);
        read_opt(t, "lr_drop_epochs", cfg.train.lr_drop_epochs);
        read_opt(t, "lr_drop_factor", cfg.train.lr_drop_factor);
        read_opt(t, "momentum", cfg.train.momentum);
        read_opt(t, "seed", cfg.train.seed);
        read_opt(t, "log_every", cfg.train.log_every);
        if (t.contains("precision"))
            cfg.train.precision = precision_from_name(t.at("precision").get<std::string>());
        if (t.contains("loss_weights")) {
            for (const auto& [id, w] : t.at("loss_weights").items()) {
                bool known = false;
                for (const DatasetSpec& spec : cfg.datasets)
                    if (spec.id == id) known = true;
                if (!known) fail("loss weight for unregistered dataset '", id, "' in section 'train'");
                cfg.train.loss_weights[id] = w.get<double>();
            }
        }
        if (t.contains("trainable")) cfg.train.trainable = parse_trainable(t.at("trainable"));
    }
    // Expand the effective weights so the snapshot pins them.
    for (const DatasetSpec& spec : cfg.datasets)
        if (!cfg.train.loss_weights.count(spec.id)) cfg.train.loss_weights[spec.id] = spec.loss_weight;
    cfg.train.validate();

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, "eval",
                   {"views", "probes", "transfer_target", "transfer_source_tag", "transfer_head_epochs",
                    "ablation_epochs", "thresholds"});
        read_opt(e, "views", cfg.eval.views);
        read_opt(e, "probes", cfg.eval.probes);
        read_opt(e, "transfer_target", cfg.eval.transfer_target);
        read_opt(e, "transfer_source_tag", cfg.eval.transfer_source_tag);
        read_opt(e, "transfer_head_epochs", cfg.eval.transfer_head_epochs);
        read_opt(e, "ablation_epochs", cfg.eval.ablation_epochs);
        if (e.contains("thresholds")) {
            for (size_t i = 0; i < e.at("thresholds").size(); ++i) {
                const json& th = e.at("thresholds")[i];
                const std::string section = cat("eval.thresholds[", i, "]");
                check_keys(th, section, {"name", "metric", "min", "max"});
                Threshold t;
                t.name = require(th, section, "name").get<std::string>();
                t.metric = require(th, section, "metric").get<std::string>();
                if (th.contains("min")) t.min = th.at("min").get<double>();
                if (th.contains("max")) t.max = th.at("max").get<double>();
                cfg.eval.thresholds.push_back(std::move(t));
            }
        }
        for (const std::string& p : cfg.eval.probes)
            if (p != "reversal" && p != "transfer" && p != "ablation")
                fail("unknown probe '", p, "' in section 'eval'");
    }
    if (cfg.eval.views != 1 && cfg.eval.views != 3) fail("eval: views must be 1 or 3");
    if (cfg.eval.transfer_target.empty()) {
        for (const DatasetSpec& spec : cfg.datasets)
            if (spec.kind == GeneratorKind::Motion && cfg.eval.transfer_target.empty())
                cfg.eval.transfer_target = spec.id;
        if (cfg.eval.transfer_target.empty())
            for (const DatasetSpec& spec : cfg.datasets)
                if (spec.modality() == Modality::Video && cfg.eval.transfer_target.empty())
                    cfg.eval.transfer_target = spec.id;
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<uint64_t> seed_override) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail("config '", path.string(), "' is not valid JSON: ", e.what());
    }
    return parse_experiment_config(j, seed_override);
}

nlohmann::json ExperimentConfig::resolved() const {
    json j;
    json m;
    m["blocks"] = model.blocks;
    m["d_model"] = model.d_model;
    m["heads"] = model.heads;
    m["patch"] = model.patch;
    m["frames"] = model.frames;
    m["height"] = model.height;
    m["width"] = model.width;
    m["channels"] = model.channels;
    m["mlp_ratio"] = model.mlp_ratio;
    j["model"] = m;

    json ds = json::array();
    for (const DatasetSpec& s : datasets) {
        ds.push_back({{"id", s.id},
                      {"name", s.name},
                      {"kind", generator_kind_name(s.kind)},
                      {"classes", s.classes},
                      {"train_size", s.train_size},
                      {"eval_size", s.eval_size},
                      {"flip_allowed", s.flip_allowed},
                      {"loss_weight", s.loss_weight},
                      {"seed", s.seed},
                      {"frames", s.frames},
                      {"height", s.height},
                      {"width", s.width},
                      {"channels", s.channels}});
    }
    j["datasets"] = ds;

    json t;
    t["stage"] = stage_name(train.stage);
    t["epochs"] = train.epochs;
    t["batch_size"] = train.batch_size;
    t["base_lr"] = train.base_lr;
    t["lr_drop_epochs"] = train.resolved_drop_epochs();
    t["lr_drop_factor"] = train.lr_drop_factor;
    t["momentum"] = train.momentum;
    t["loss_weights"] = train.loss_weights;
    t["seed"] = train.seed;
    t["precision"] = precision_name(train.precision);
    t["log_every"] = train.log_every;
    if (train.trainable) t["trainable"] = trainable_to_json(*train.trainable);
    j["train"] = t;

    json e;
    e["views"] = eval.views;
    e["probes"] = eval.probes;
    e["transfer_target"] = eval.transfer_target;
    e["transfer_source_tag"] = eval.transfer_source_tag;
    e["transfer_head_epochs"] = eval.transfer_head_epochs;
    e["ablation_epochs"] = eval.ablation_epochs;
    json ths = json::array();
    for (const Threshold& t2 : eval.thresholds) {
        json th{{"name", t2.name}, {"metric", t2.metric}};
        if (t2.min) th["min"] = *t2.min;
        if (t2.max) th["max"] = *t2.max;
        ths.push_back(th);
    }
    e["thresholds"] = ths;
    j["eval"] = e;

    j["io"] = {{"run_dir", io.run_dir}, {"seed", io.seed}};
    return j;
}

uint64_t ExperimentConfig::hash() const { return fnv1a(resolved().dump()); }

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

struct RunContext {
    ExperimentConfig cfg;
    std::filesystem::path run_dir;
    std::string run_id;
};

RunContext prepare_run(const CliOptions& opts) {
    if (opts.config_path.empty()) fail("--config is required");
    RunContext ctx;
    ctx.cfg = load_experiment_config(opts.config_path, opts.seed);
    if (!opts.out.empty()) ctx.cfg.io.run_dir = opts.out;
    ctx.run_dir = ctx.cfg.io.run_dir;
    ctx.run_id = ctx.run_dir.filename().string();
    if (ctx.run_id.empty()) ctx.run_id = "run";
    std::filesystem::create_directories(ctx.run_dir);

    const std::filesystem::path snap_path = ctx.run_dir / "config.resolved.json";
    const std::string snap = ctx.cfg.resolved().dump(2) + "\n";
    if (std::filesystem::exists(snap_path) && !opts.overwrite) {
        if (read_file(snap_path) != snap)
            fail("run directory '", ctx.run_dir.string(),
                 "' holds a different resolved config; use --overwrite or another --out");
    } else {
        write_file_atomic(snap_path, snap);
    }
    return ctx;
}

void refuse_existing(const std::filesystem::path& p, bool overwrite) {
    if (std::filesystem::exists(p) && !overwrite)
        fail("artifact '", p.string(), "' already exists; run directories are append-only (use --overwrite)");
}

// Builds parameters for this config, seeded from io.seed, then overlays every
// array stored in the checkpoint. Heads that only exist in the new config keep
// their fresh initialization (rejected when `require_all_heads` is set, e.g.
// for evaluation, where a fresh head would silently score at chance).
ModelParams params_from_checkpoint(const std::filesystem::path& ckpt, const ExperimentConfig& cfg,
                                   bool require_all_heads = false) {
    Checkpoint ck = load_checkpoint(ckpt);
    const uint64_t ck_hash = fnv1a(model_config_to_json(ck.model).dump());
    const uint64_t cfg_hash = fnv1a(model_config_to_json(cfg.model).dump());
    if (!ck.model.same_backbone(cfg.model))
        fail("checkpoint/config mismatch: checkpoint model ", hex64(ck_hash), " vs config model ",
             hex64(cfg_hash));
    for (const HeadSpec& h : cfg.model.head_table) {
        const HeadSpec* other = ck.model.find_head(h.dataset_id);
        if (other && other->classes != h.classes)
            fail("checkpoint/config mismatch on head '", h.dataset_id, "' (", other->classes, " vs ",
                 h.classes, " classes); checkpoint model ", hex64(ck_hash), " vs config model ",
                 hex64(cfg_hash));
        if (!other && require_all_heads)
            fail("checkpoint/config mismatch: checkpoint has no head for '", h.dataset_id,
                 "'; checkpoint model ", hex64(ck_hash), " vs config model ", hex64(cfg_hash));
    }
    ModelParams params = ModelParams::init(cfg.model, cfg.io.seed,
                                           cfg.train.precision == Precision::Single);
    for (const ParamEntry& e : ck.params.entries()) {
        if (!params.has(e.name)) continue;  // e.g. a pretrain head the new config dropped
        Tensor& dst = params.at(e.name);
        if (dst.shape != e.tensor.shape)
            fail("checkpoint parameter '", e.name, "' has shape ", shape_str(e.tensor.shape),
                 ", config expects ", shape_str(dst.shape));
        dst.values = e.tensor.values;
    }
    return params;
}

// Threshold state persists across eval/probe invocations on the same run dir
// so late probes are judged together with earlier eval metrics.
MetricBag load_metric_state(const std::filesystem::path& run_dir) {
    MetricBag bag;
    const std::filesystem::path p = run_dir / "metrics_state.json";
    if (std::filesystem::exists(p)) {
        const json j = json::parse(read_file(p));
        for (const auto& [k, v] : j.items()) bag[k] = v.get<double>();
    }
    return bag;
}

void save_metric_state(const std::filesystem::path& run_dir, const MetricBag& bag) {
    json j;
    for (const auto& [k, v] : bag) j[k] = v;
    write_file_atomic(run_dir / "metrics_state.json", j.dump(2) + "\n");
}

int apply_thresholds(const ExperimentConfig& cfg, const std::filesystem::path& run_dir,
                     const MetricBag& fresh) {
    MetricBag bag = load_metric_state(run_dir);
    for (const auto& [k, v] : fresh) bag[k] = v;
    save_metric_state(run_dir, bag);

    bool violated = false;
    for (const Threshold& t : cfg.eval.thresholds) {
        if (!bag.count(t.metric)) {
            std::cout << "[warn] threshold '" << t.name << "': metric '" << t.metric
                      << "' not produced yet\n";
            continue;
        }
        const auto failures = check_thresholds({t}, bag);
        if (failures.empty()) {
            std::cout << "[ok] threshold '" << t.name << "' satisfied (" << t.metric << " = "
                      << bag.at(t.metric) << ")\n";
        } else {
            for (const std::string& f : failures) std::cout << "[FAIL] " << f << "\n";
            violated = true;
        }
    }
    return violated ? 1 : 0;
}

}  // namespace

int cmd_gen(const CliOptions& opts) {
    RunContext ctx = prepare_run(opts);
    const std::filesystem::path dir = ctx.run_dir / "datasets";
    refuse_existing(dir / "manifest.json", opts.overwrite);

    json all = json::array();
    for (const DatasetSpec& spec : ctx.cfg.datasets) {
        json m{{"id", spec.id},
               {"name", spec.name},
               {"kind", generator_kind_name(spec.kind)},
               {"classes", spec.classes},
               {"train_size", spec.train_size},
               {"eval_size", spec.eval_size},
               {"flip_allowed", spec.flip_allowed},
               {"loss_weight", spec.loss_weight},
               {"seed", spec.seed},
               {"frames", spec.frames},
               {"height", spec.height},
               {"width", spec.width},
               {"channels", spec.channels}};
        write_file_atomic(dir / (spec.id + ".manifest.json"), m.dump(2) + "\n");
        all.push_back(m);
    }
    write_file_atomic(dir / "manifest.json", json{{"datasets", all}}.dump(2) + "\n");
    std::cout << "[ok] wrote " << ctx.cfg.datasets.size() << " dataset manifests under "
              << dir.string() << "\n";
    return 0;
}

int cmd_train(const CliOptions& opts, Stage stage) {
    RunContext ctx = prepare_run(opts);
    ctx.cfg.train.stage = stage;
    const std::filesystem::path ckpt_out = ctx.run_dir / "checkpoint.bin";
    refuse_existing(ckpt_out, opts.overwrite);

    ModelParams params = [&] {
        if (!opts.checkpoint.empty()) {
            if (!std::filesystem::exists(opts.checkpoint))
                fail("checkpoint '", opts.checkpoint, "' does not exist");
            return params_from_checkpoint(opts.checkpoint, ctx.cfg);
        }
        return ModelParams::init(ctx.cfg.model, ctx.cfg.io.seed,
                                 ctx.cfg.train.precision == Precision::Single);
    }();

    const std::filesystem::path metrics_path = ctx.run_dir / "metrics.jsonl";
    if (std::filesystem::exists(metrics_path)) {
        if (!opts.overwrite)
            fail("artifact '", metrics_path.string(), "' already exists; use --overwrite");
        std::filesystem::remove(metrics_path);
    }
    MetricsSink sink(metrics_path);

    Registry registry = ctx.cfg.build_registry();
    Trainer trainer(params, ctx.cfg.model, registry, ctx.cfg.train, &sink, ctx.run_id);
    trainer.run();
    trainer.save(ckpt_out);
    std::cout << "[ok] " << stage_name(stage) << " finished after " << trainer.step() << " steps; checkpoint "
              << ckpt_out.string() << " (" << hex64(file_hash(ckpt_out)) << ")\n";
    return 0;
}

int cmd_eval(const CliOptions& opts) {
    RunContext ctx = prepare_run(opts);
    if (opts.checkpoint.empty()) fail("eval requires --checkpoint");
    ModelParams params = params_from_checkpoint(opts.checkpoint, ctx.cfg, /*require_all_heads=*/true);
    Registry registry = ctx.cfg.build_registry();

    const std::filesystem::path reports = ctx.run_dir / "reports";
    MetricBag bag;
    for (const DatasetSpec& spec : ctx.cfg.datasets) {
        refuse_existing(reports / ("eval_" + spec.id + ".md"), opts.overwrite);
        EvalOptions eo;
        eo.views = ctx.cfg.eval.views;
        const EvalReport rep = evaluate(params, ctx.cfg.model, registry.at(spec.id), eo);
        write_eval_report(reports, ctx.run_id, rep);
        collect_metrics(rep, bag);
        std::cout << "[ok] eval " << spec.id << ": top1 " << pct(rep.top1) << "%\n";
    }
    return apply_thresholds(ctx.cfg, ctx.run_dir, bag);
}

int cmd_probe(const CliOptions& opts) {
    RunContext ctx = prepare_run(opts);
    if (opts.probe.empty()) fail("probe requires --probe {reversal|transfer|ablation}");
    Registry registry = ctx.cfg.build_registry();
    const std::filesystem::path reports = ctx.run_dir / "reports";
    MetricBag bag;

    if (opts.probe == "reversal") {
        if (opts.checkpoint.empty()) fail("probe reversal requires --checkpoint");
        ModelParams params = params_from_checkpoint(opts.checkpoint, ctx.cfg, /*require_all_heads=*/true);
        for (const DatasetSpec& spec : ctx.cfg.datasets) {
            if (spec.modality() != Modality::Video) continue;
            refuse_existing(reports / ("reversal_" + spec.id + ".md"), opts.overwrite);
            const ProbeReport rep =
                reversal_probe(params, ctx.cfg.model, registry.at(spec.id), ctx.cfg.eval.views);
            write_probe_report(reports, ctx.run_id, rep);
            collect_metrics(rep, bag);
            std::cout << "[ok] reversal " << spec.id << ": delta " << pct(rep.deltas[0].value)
                      << " points\n";
        }
    } else if (opts.probe == "transfer") {
        if (opts.checkpoint.empty()) fail("probe transfer requires --checkpoint");
        const std::string target = ctx.cfg.eval.transfer_target;
        if (target.empty()) fail("no transfer target configured and no video dataset registered");
        refuse_existing(reports / ("transfer_" + target + ".md"), opts.overwrite);
        ModelParams params = params_from_checkpoint(opts.checkpoint, ctx.cfg);
        const ProbeReport rep =
            transfer_probe(params, ctx.cfg.model, registry, target, ctx.cfg.eval.transfer_source_tag,
                           ctx.cfg.eval.transfer_head_epochs, ctx.cfg.train, ctx.cfg.eval.views);
        write_probe_report(reports, ctx.run_id, rep);
        collect_metrics(rep, bag);
        std::cout << "[ok] transfer " << rep.rows[0].condition << ": top1 " << pct(rep.rows[0].values[0])
                  << "%\n";
    } else if (opts.probe == "ablation") {
        refuse_existing(reports / "ablation.md", opts.overwrite);
        TrainConfig tc = ctx.cfg.train;
        tc.stage = Stage::Cotrain;
        if (ctx.cfg.eval.ablation_epochs > 0) {
            tc.epochs = ctx.cfg.eval.ablation_epochs;
            tc.lr_drop_epochs.clear();
        }
        const auto runs = default_ablation_runs(registry);
        const ProbeReport rep =
            ablation_matrix(ctx.cfg.model, registry, runs, tc, ctx.cfg.io.seed, ctx.cfg.eval.views);
        write_probe_report(reports, ctx.run_id, rep);
        collect_metrics(rep, bag);
        std::cout << "[ok] ablation grid: " << rep.rows.size() << " runs\n";
    } else {
        fail("unknown probe '", opts.probe, "' (expected reversal, transfer or ablation)");
    }
    return apply_thresholds(ctx.cfg, ctx.run_dir, bag);
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    const std::filesystem::path out =
        out_dir.empty() ? std::filesystem::path(run_dirs.at(0)) : std::filesystem::path(out_dir);
    merge_reports(run_dirs, out);
    std::cout << "[ok] summary written to " << (out / "summary.md").string() << "\n";
    return 0;
}

}  // namespace vtc
