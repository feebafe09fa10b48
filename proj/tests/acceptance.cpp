// Acceptance suite: desk-scale end-to-end checks, one pass/fail line per
// criterion. Training artifacts are shared across criteria, so the suite runs
// the two-stage pipeline once plus the baseline/ablation runs it needs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <vector>

#include "support/oracles.hpp"
#include "vtc/evalsuite.hpp"
#include "vtc/report.hpp"
#include "vtc/trainer.hpp"
#include "vtc/util.hpp"

using namespace vtc;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0;
};

std::vector<CriterionResult> g_results;
std::vector<std::string> g_failures;

void record(const std::string& name, const std::function<std::string()>& body) {
    CriterionResult r;
    r.name = name;
    const auto t0 = Clock::now();
    try {
        g_failures.clear();
        r.detail = body();
        r.pass = g_failures.empty();
        if (!r.pass) {
            for (const auto& f : g_failures) r.detail += (r.detail.empty() ? "" : "; ") + f;
        }
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = cat("exception: ", e.what());
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    printf("[%s] %s: %s (%.1fs)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(),
           r.seconds);
    fflush(stdout);
    g_results.push_back(std::move(r));
}

void expect(bool cond, const std::string& msg) {
    if (!cond) g_failures.push_back(msg);
}

std::string pcts(double v) { return pct(v); }

// ---------------------------------------------------------------------------
// Desk-scale configuration
// ---------------------------------------------------------------------------

constexpr uint64_t kSeed = 20240817;

ModelConfig desk_model() {
    ModelConfig cfg;  // defaults are the desk config
    cfg.head_table = {{"motion", 4}, {"appearance", 4}, {"textures", 8}};
    return cfg;
}

DatasetSpec desk_motion() {
    DatasetSpec s;
    s.id = "motion";
    s.kind = GeneratorKind::Motion;
    s.classes = 4;
    s.train_size = 2000;
    s.eval_size = 500;
    s.flip_allowed = false;
    s.seed = CounterRng::derive(kSeed, fnv1a("motion"));
    return s;
}

DatasetSpec desk_appearance() {
    DatasetSpec s;
    s.id = "appearance";
    s.kind = GeneratorKind::Appearance;
    s.classes = 4;
    s.train_size = 2000;
    s.eval_size = 500;
    s.seed = CounterRng::derive(kSeed, fnv1a("appearance"));
    return s;
}

DatasetSpec desk_textures() {
    DatasetSpec s;
    s.id = "textures";
    s.kind = GeneratorKind::Image;
    s.classes = 8;
    s.train_size = 4000;
    s.eval_size = 500;
    s.frames = 1;
    s.seed = CounterRng::derive(kSeed, fnv1a("textures"));
    return s;
}

TrainConfig desk_train() {
    TrainConfig tc;  // 20 epochs, batch 32, base lr 1.25e-3, drops at 11/15
    tc.seed = kSeed;
    tc.log_every = 1000000;
    return tc;
}

Registry make_registry(std::initializer_list<DatasetSpec> specs) {
    Registry reg;
    for (const DatasetSpec& s : specs) reg.add(s);
    return reg;
}

double eval_top1(const ModelParams& params, const ModelConfig& cfg, const Dataset& ds) {
    EvalOptions opts;
    opts.views = 3;
    return evaluate(params, cfg, ds, opts).top1;
}

}  // namespace

int main() {
    printf("acceptance suite: desk-scale co-training workbench\n");
    fflush(stdout);

    const ModelConfig model = desk_model();
    Registry full = make_registry({desk_motion(), desk_appearance(), desk_textures()});
    Registry motion_only = make_registry({desk_motion()});
    Registry appearance_only = make_registry({desk_appearance()});
    Registry videos = make_registry({desk_motion(), desk_appearance()});
    Registry textures_only = make_registry({desk_textures()});

    // -----------------------------------------------------------------------
    // C1: gradient fidelity of every differentiable op and the full model.
    // -----------------------------------------------------------------------
    record("C1 gradient fidelity (ops + full 2-block model, <1 min)", [&] {
        const auto t0 = Clock::now();
        CounterRng rng(404);
        double worst = 0;

        auto rnd = [&](Shape shape) {
            Tensor t(std::move(shape));
            for (double& v : t.values) v = rng.next_uniform(-1.0, 1.0);
            return t;
        };
        // Weighted-sum loss over an op output; FD versus recorded gradients.
        auto check_op = [&](const char* name, Shape in_shape,
                            const std::function<Tensor(Tape&, const Tensor&)>& op) {
            Tensor x = rnd(in_shape);
            Tensor w;
            {
                Tape probe;
                w = rnd(op(probe, x).shape);
            }
            auto loss_of = [&](const std::vector<double>& vals) {
                Tape t;
                Tensor in(in_shape, vals);
                Tensor out = op(t, in);
                double acc = 0;
                for (int64_t i = 0; i < out.size(); ++i) acc += w.values[static_cast<size_t>(i)] * out.values[static_cast<size_t>(i)];
                return acc;
            };
            Tape tape;
            tape.watch(x);
            Tensor loss = sum_all(tape, mul(tape, op(tape, x), w));
            tape.backward(loss);
            const double err = oracle::max_grad_rel_err(loss_of, x.values, x.grad);
            expect(err < 1e-4, cat(name, " gradient err ", err));
            worst = std::max(worst, err);
        };

        Tensor rhs = rnd({6, 5});
        check_op("matmul", {4, 6}, [&](Tape& t, const Tensor& x) { return matmul(t, x, rhs); });
        check_op("transpose", {4, 6}, [](Tape& t, const Tensor& x) { return transpose(t, x); });
        check_op("add", {4, 6}, [&](Tape& t, const Tensor& x) { return add(t, x, x); });
        check_op("mul", {4, 6}, [&](Tape& t, const Tensor& x) { return mul(t, x, x); });
        check_op("scale", {4, 6}, [](Tape& t, const Tensor& x) { return scale(t, x, -1.7); });
        Tensor bias = rnd({6});
        check_op("bias_add", {4, 6}, [&](Tape& t, const Tensor& x) { return bias_add(t, x, bias); });
        check_op("softmax_lastdim", {4, 6},
                 [](Tape& t, const Tensor& x) { return softmax_lastdim(t, x); });
        Tensor gain = rnd({6});
        check_op("layer_norm", {4, 6},
                 [&](Tape& t, const Tensor& x) { return layer_norm(t, x, gain, bias, 1e-5); });
        check_op("gelu", {4, 6}, [](Tape& t, const Tensor& x) { return gelu(t, x); });
        check_op("reshape", {4, 6}, [](Tape& t, const Tensor& x) { return reshape(t, x, {2, 12}); });
        check_op("slice_lastdim", {4, 6},
                 [](Tape& t, const Tensor& x) { return slice_lastdim(t, x, 1, 3); });
        check_op("concat_lastdim", {4, 6},
                 [](Tape& t, const Tensor& x) { return concat_lastdim(t, {x, x}); });
        check_op("concat_rows", {4, 6}, [](Tape& t, const Tensor& x) { return concat_rows(t, {x, x}); });
        check_op("gather_rows", {4, 6},
                 [](Tape& t, const Tensor& x) { return gather_rows(t, x, {3, 0, 0, 2}); });
        check_op("scatter_rows", {4, 6},
                 [](Tape& t, const Tensor& x) { return scatter_rows(t, x, {5, 1, 0, 3}, 6); });
        check_op("sum_all", {4, 6}, [](Tape& t, const Tensor& x) { return sum_all(t, x); });
        check_op("mean_all", {4, 6}, [](Tape& t, const Tensor& x) { return mean_all(t, x); });
        Tensor kv = rnd({8, 8});
        check_op("attention_mix", {8, 8},
                 [&](Tape& t, const Tensor& x) { return attention_mix(t, x, kv, kv, 2, 2); });
        check_op("cross_entropy", {3, 5},
                 [](Tape& t, const Tensor& x) { return cross_entropy(t, x, {2, 0, 4}); });

        // Full desk model: 25 randomly sampled parameter components.
        ModelParams params = ModelParams::init(model, kSeed, /*quantize=*/false);
        Dataset motion_ds(desk_motion());
        VideoClip clip = motion_ds.clip(Split::Train, 5);
        CounterRng crop_rng(11);
        clip = augment(clip, desk_motion(), model.height, model.width, crop_rng);
        auto model_loss = [&]() {
            Tape tape;
            Tensor f = forward_features(tape, params, model, clip.frames, TemporalMode::Attention);
            Tensor logits = classify(tape, params, model, "motion", f);
            return cross_entropy(tape, reshape(tape, logits, {1, 4}), {clip.label}).values[0];
        };
        Tape tape;
        for (auto& [name, t] : params.select(TrainableMask::all())) tape.watch(*t);
        Tensor f = forward_features(tape, params, model, clip.frames, TemporalMode::Attention);
        Tensor logits = classify(tape, params, model, "motion", f);
        Tensor loss = cross_entropy(tape, reshape(tape, logits, {1, 4}), {clip.label});
        tape.backward(loss);

        int probes = 0;
        double model_worst = 0;
        auto& entries = params.entries();
        while (probes < 25) {
            ParamEntry& e = entries[static_cast<size_t>(rng.next_int(static_cast<int>(entries.size())))];
            if (e.partition == Partition::Head && e.head_id != "motion") continue;  // exact zeros
            const int idx = rng.next_int(static_cast<int>(e.tensor.size()));
            const double keep = e.tensor.values[static_cast<size_t>(idx)];
            const double h = 1e-5;
            e.tensor.values[static_cast<size_t>(idx)] = keep + h;
            const double fp = model_loss();
            e.tensor.values[static_cast<size_t>(idx)] = keep - h;
            const double fm = model_loss();
            e.tensor.values[static_cast<size_t>(idx)] = keep;
            const double err =
                oracle::rel_err(e.tensor.grad[static_cast<size_t>(idx)], (fp - fm) / (2 * h));
            model_worst = std::max(model_worst, err);
            ++probes;
        }
        expect(model_worst < 1e-4, cat("full-model gradient err ", model_worst));
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        expect(secs < 60.0, cat("runtime ", secs, "s exceeds 1 minute"));
        return cat("op err<=", worst, ", model err<=", model_worst, " (tol 1e-4), ", probes,
                   " params");
    });

    // -----------------------------------------------------------------------
    // C2: single-frame degeneracy.
    // -----------------------------------------------------------------------
    record("C2 single-frame degeneracy (attention == bypass within 1e-6)", [&] {
        ModelParams params = ModelParams::init(model, kSeed + 1, false);
        Dataset tex(desk_textures());
        double worst = 0;
        for (int i = 0; i < 5; ++i) {
            VideoClip img = tex.clip(Split::Eval, i);
            CounterRng crop_rng(i);
            img = augment(img, desk_textures(), model.height, model.width, crop_rng);
            Tape t1, t2;
            Tensor a = forward_features(t1, params, model, img.frames, TemporalMode::Attention);
            Tensor b = forward_features(t2, params, model, img.frames, TemporalMode::Degenerate);
            for (int k = 0; k < model.d_model; ++k)
                worst = std::max(worst, std::fabs(a.values[static_cast<size_t>(k)] - b.values[static_cast<size_t>(k)]));
        }
        expect(worst <= 1e-6, cat("max diff ", worst));
        return cat("max |attention - bypass| = ", worst);
    });

    // -----------------------------------------------------------------------
    // C5: sampling proportionality (cheap, no training needed).
    // -----------------------------------------------------------------------
    record("C5 proportional sampling (10k draws within 2 points)", [&] {
        Sampler sampler(full, {"motion", "appearance", "textures"}, kSeed + 2);
        (void)sampler.compose_batch(10000);
        const auto& counts = sampler.draw_counts();
        const double total = 2000 + 2000 + 4000;
        std::string detail;
        for (const auto& [id, count] : counts) {
            const double want = full.at(id).spec().train_size / total;
            const double got = count / 10000.0;
            expect(std::fabs(got - want) <= 0.02,
                   cat(id, " drawn ", got, ", expected ", want, " within 0.02"));
            detail += cat(id, "=", got, " ");
        }
        return detail + "(expected 0.25/0.25/0.50)";
    });

    // -----------------------------------------------------------------------
    // Stage 1: spatial pretraining on the image dataset (shared init).
    // -----------------------------------------------------------------------
    ModelParams pretrained = ModelParams::init(model, kSeed, true);

    record("C3a pretrain freeze (theta_t bit-identical; image accuracy >= 85%)", [&] {
        const uint64_t temporal_before = pretrained.hash(Partition::Temporal);
        const uint64_t motion_head_before = pretrained.head_hash("motion");
        const uint64_t appearance_head_before = pretrained.head_hash("appearance");
        const uint64_t spatial_before = pretrained.hash(Partition::Spatial);

        TrainConfig tc = desk_train();
        tc.stage = Stage::Pretrain;
        Trainer trainer(pretrained, model, textures_only, tc);
        trainer.run();

        expect(pretrained.hash(Partition::Temporal) == temporal_before, "theta_t changed in pretrain");
        expect(pretrained.head_hash("motion") == motion_head_before, "motion head changed in pretrain");
        expect(pretrained.head_hash("appearance") == appearance_head_before,
               "appearance head changed in pretrain");
        expect(pretrained.hash(Partition::Spatial) != spatial_before, "theta_s did not train");

        const double acc = eval_top1(pretrained, model, full.at("textures"));
        expect(acc >= 0.85, cat("image accuracy ", pcts(acc), "% below 85%"));
        return cat("theta_t frozen; textures top1 ", pcts(acc), "%");
    });

    // -----------------------------------------------------------------------
    // Stage 2 runs (shared across C4 and C6-C8): all start from the pretrained
    // parameters with the same seed and differ only in registry/weights.
    // -----------------------------------------------------------------------
    auto finetune = [&](const Registry& reg, std::map<std::string, double> weights,
                        const char* label) {
        ModelParams params = pretrained;
        TrainConfig tc = desk_train();
        tc.loss_weights = std::move(weights);
        Trainer trainer(params, model, reg, tc);
        printf("  [train] %s: %lld steps...\n", label, static_cast<long long>(trainer.total_steps()));
        fflush(stdout);
        trainer.run();
        return params;
    };

    printf("[run] stage-2 trainings (co-train, baselines, weight grid)\n");
    fflush(stdout);
    ModelParams co = finetune(full, {{"motion", 1.0}, {"appearance", 1.0}, {"textures", 0.5}}, "cotrain w=0.5");
    ModelParams base_motion = finetune(motion_only, {{"motion", 1.0}}, "motion baseline");
    ModelParams base_appearance = finetune(appearance_only, {{"appearance", 1.0}}, "appearance baseline");
    ModelParams videos_only_params = finetune(videos, {{"motion", 1.0}, {"appearance", 1.0}}, "videos only");
    ModelParams w0 = finetune(full, {{"motion", 1.0}, {"appearance", 1.0}, {"textures", 0.0}}, "grid w=0");
    ModelParams w75 = finetune(full, {{"motion", 1.0}, {"appearance", 1.0}, {"textures", 0.75}}, "grid w=0.75");

    // -----------------------------------------------------------------------
    // C4: loss composition and the zero-weight equivalence.
    // -----------------------------------------------------------------------
    record("C4 loss composition (additivity 1e-6; w=0 equals video-only bit-exactly)", [&] {
        // Additivity on one desk batch against independently computed means.
        ModelParams params = pretrained;
        TrainConfig tc = desk_train();
        tc.loss_weights = {{"motion", 1.0}, {"appearance", 0.7}, {"textures", 0.5}};
        Trainer trainer(params, model, full, tc);
        trainer.run_steps(1);
        Sampler sampler(full, {"motion", "appearance", "textures"}, tc.seed);
        auto batch = sampler.compose_batch(tc.batch_size);
        CounterRng aug_base(CounterRng::derive(tc.seed, rng_stream::kAugment));
        std::map<std::string, std::vector<double>> losses;
        for (size_t slot = 0; slot < batch.size(); ++slot) {
            const DatasetSpec& spec = batch[slot].dataset->spec();
            VideoClip clip = batch[slot].dataset->clip(Split::Train, batch[slot].clip_index);
            CounterRng aug = aug_base.stream(slot);
            clip = augment(clip, spec, model.height, model.width, aug);
            Tape tape;
            const TemporalMode mode =
                clip.frames.shape[0] == 1 ? TemporalMode::Degenerate : TemporalMode::Attention;
            Tensor feat = forward_features(tape, pretrained, model, clip.frames, mode);
            Tensor logits = classify(tape, pretrained, model, spec.id, feat);
            losses[spec.id].push_back(
                cross_entropy(tape, reshape(tape, logits, {1, spec.classes}), {clip.label}).values[0]);
        }
        double expected = 0;
        for (const auto& [id, ls] : losses) {
            double mean = 0;
            for (double l : ls) mean += l;
            mean /= static_cast<double>(ls.size());
            expected += tc.loss_weights.at(id) * mean;
        }
        const double additivity_err = std::fabs(trainer.last_total_loss() - expected);
        expect(additivity_err < 1e-6, cat("additivity err ", additivity_err));

        // Zero-weight equivalence over the full runs trained above.
        expect(videos_only_params.hash(Partition::Spatial) == w0.hash(Partition::Spatial),
               "spatial partitions differ");
        expect(videos_only_params.hash(Partition::Temporal) == w0.hash(Partition::Temporal),
               "temporal partitions differ");
        expect(videos_only_params.head_hash("motion") == w0.head_hash("motion"), "motion heads differ");
        expect(videos_only_params.head_hash("appearance") == w0.head_hash("appearance"),
               "appearance heads differ");
        return cat("additivity err ", additivity_err, "; w=0 run bit-identical to video-only run");
    });

    // -----------------------------------------------------------------------
    // C6: frame-reversal probes on the independently trained desk models.
    // -----------------------------------------------------------------------
    record("C6 reversal probes (appearance delta >= -2; motion >= 70% / reversed <= 15%)", [&] {
        const ProbeReport app = reversal_probe(base_appearance, model, full.at("appearance"), 3);
        const double app_delta = app.deltas[0].value;
        expect(app_delta >= -0.02, cat("appearance delta ", pcts(app_delta), " below -2 points"));

        const ProbeReport mot = reversal_probe(base_motion, model, full.at("motion"), 3);
        const double normal = mot.value_at("normal", "top1");
        const double reversed = mot.value_at("reversed", "top1");
        const double remapped = mot.value_at("reversed_remapped", "top1");
        expect(normal >= 0.70, cat("motion normal ", pcts(normal), "% below 70%"));
        expect(reversed <= 0.15, cat("motion reversed ", pcts(reversed), "% above 15%"));
        expect(mot.deltas[0].value <= -0.30,
               cat("motion delta ", pcts(mot.deltas[0].value), " above -30 points"));
        expect(std::fabs(remapped - normal) <= 0.05,
               cat("remapped accuracy ", pcts(remapped), "% not within 5 points of normal"));
        return cat("appearance ", pcts(app.value_at("normal", "top1")), "% -> ",
                   pcts(app.value_at("reversed", "top1")), "% (delta ", pcts(app_delta),
                   "); motion ", pcts(normal), "% -> ", pcts(reversed), "% (remapped ",
                   pcts(remapped), "%)");
    });

    // -----------------------------------------------------------------------
    // C7: co-training gains and frozen-feature transfer.
    // -----------------------------------------------------------------------
    bool transfer_frozen_co = false, transfer_frozen_ap = false;
    record("C7 co-training >= baselines - 1pt; co transfer > appearance transfer + 5pts", [&] {
        const double co_motion = eval_top1(co, model, full.at("motion"));
        const double co_appearance = eval_top1(co, model, full.at("appearance"));
        const double bm = eval_top1(base_motion, model, full.at("motion"));
        const double ba = eval_top1(base_appearance, model, full.at("appearance"));
        expect(co_motion >= bm - 0.01,
               cat("co-train motion ", pcts(co_motion), "% < baseline ", pcts(bm), "% - 1pt"));
        expect(co_appearance >= ba - 0.01,
               cat("co-train appearance ", pcts(co_appearance), "% < baseline ", pcts(ba), "% - 1pt"));

        TrainConfig tc = desk_train();
        const int head_epochs = 5;

        ModelParams co_copy = co;
        const uint64_t s_before = co_copy.hash(Partition::Spatial);
        const uint64_t t_before = co_copy.hash(Partition::Temporal);
        const ProbeReport co_tr =
            transfer_probe(co_copy, model, full, "motion", "cotrained", head_epochs, tc, 3);
        transfer_frozen_co = co_copy.hash(Partition::Spatial) == s_before &&
                             co_copy.hash(Partition::Temporal) == t_before;

        ModelParams ap_copy = base_appearance;
        const uint64_t s2 = ap_copy.hash(Partition::Spatial), t2 = ap_copy.hash(Partition::Temporal);
        const ProbeReport ap_tr =
            transfer_probe(ap_copy, model, full, "motion", "appearance-only", head_epochs, tc, 3);
        transfer_frozen_ap =
            ap_copy.hash(Partition::Spatial) == s2 && ap_copy.hash(Partition::Temporal) == t2;

        const double co_t = co_tr.value_at("cotrained->motion", "top1");
        const double ap_t = ap_tr.value_at("appearance-only->motion", "top1");
        expect(ap_t <= 0.40, cat("appearance-only transfer ", pcts(ap_t), "% above 40%"));
        expect(co_t >= ap_t + 0.05,
               cat("co-trained transfer ", pcts(co_t), "% not 5 points above ", pcts(ap_t), "%"));

        return cat("motion ", pcts(co_motion), "% vs baseline ", pcts(bm), "%; appearance ",
                   pcts(co_appearance), "% vs ", pcts(ba), "%; transfer co ", pcts(co_t),
                   "% vs appearance ", pcts(ap_t), "%");
    });

    // The frozen-transfer hash equality is the second half of criterion 3.
    record("C3b transfer freeze (theta_s/theta_t hash equality)", [&] {
        expect(transfer_frozen_co, "co-trained transfer touched the frozen backbone");
        expect(transfer_frozen_ap, "appearance transfer touched the frozen backbone");
        return std::string("backbone bit-identical through both transfer probes");
    });

    // -----------------------------------------------------------------------
    // C8: image loss-weight grid.
    // -----------------------------------------------------------------------
    record("C8 image accuracy non-decreasing over w_image in {0, 0.5, 0.75}", [&] {
        const double a0 = eval_top1(w0, model, full.at("textures"));
        const double a05 = eval_top1(co, model, full.at("textures"));
        const double a75 = eval_top1(w75, model, full.at("textures"));
        expect(a0 <= a05, cat("w=0 accuracy ", pcts(a0), "% above w=0.5 accuracy ", pcts(a05), "%"));
        expect(a05 <= a75, cat("w=0.5 accuracy ", pcts(a05), "% above w=0.75 accuracy ", pcts(a75), "%"));
        return cat("textures top1: ", pcts(a0), "% -> ", pcts(a05), "% -> ", pcts(a75), "%");
    });

    // -----------------------------------------------------------------------
    // C9: determinism and persistence.
    // -----------------------------------------------------------------------
    record("C9 determinism (identical reports) and bit-exact resume", [&] {
        const auto dir = std::filesystem::temp_directory_path() / "vtc_acceptance";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);

        // Identical short runs produce identical parameters and report bytes.
        auto short_run = [&](const std::filesystem::path& report_dir) {
            ModelParams params = pretrained;
            TrainConfig tc = desk_train();
            tc.epochs = 2;
            tc.loss_weights = {{"motion", 1.0}};
            Trainer trainer(params, model, motion_only, tc);
            trainer.run();
            EvalOptions opts;
            opts.views = 3;
            write_eval_report(report_dir, "det", evaluate(params, model, motion_only.at("motion"), opts));
            return params.hash();
        };
        const uint64_t h1 = short_run(dir / "a");
        const uint64_t h2 = short_run(dir / "b");
        expect(h1 == h2, "identical runs diverged");
        expect(read_file(dir / "a" / "eval_motion.md") == read_file(dir / "b" / "eval_motion.md"),
               "eval markdown differs between identical runs");
        expect(read_file(dir / "a" / "eval_motion.csv") == read_file(dir / "b" / "eval_motion.csv"),
               "eval csv differs between identical runs");

        // Resume matches uninterrupted training bit-exactly.
        ModelParams uninterrupted = pretrained;
        TrainConfig tc = desk_train();
        tc.epochs = 2;
        tc.loss_weights = {{"motion", 1.0}};
        Trainer t_full(uninterrupted, model, motion_only, tc);
        t_full.run_steps(60);
        t_full.save(dir / "mid.bin");
        t_full.run_steps(40);
        t_full.save(dir / "end_full.bin");

        Checkpoint ck = load_checkpoint(dir / "mid.bin");
        Trainer t_res(ck.params, ck.model, motion_only, tc);
        t_res.restore(*ck.run);
        t_res.run_steps(40);
        t_res.save(dir / "end_resumed.bin");

        expect(ck.params.hash() == uninterrupted.hash(), "resumed parameters differ");
        expect(read_file(dir / "end_full.bin") == read_file(dir / "end_resumed.bin"),
               "resumed checkpoint bytes differ");
        return std::string("identical report bytes; resume bit-exact");
    });

    // -----------------------------------------------------------------------
    printf("\n==== acceptance summary ====\n");
    int passed = 0;
    for (const auto& r : g_results) {
        printf("[%s] %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str());
        if (r.pass) ++passed;
    }
    printf("%d/%zu criteria passed\n", passed, g_results.size());
    return passed == static_cast<int>(g_results.size()) ? 0 : 1;
}
