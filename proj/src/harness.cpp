#include "dd/harness.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dd/errors.hpp"
#include "dd/export.hpp"
#include "dd/metrics.hpp"
#include "dd/metrics_csv.hpp"
#include "dd/train.hpp"

namespace fs = std::filesystem;

namespace dd {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t ms_since(Clock::time_point start) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count());
}

Tensor<float> first_rows(const Tensor<float>& t, std::size_t n) {
    const std::size_t total = t.dims[0];
    if (n >= total) return t;
    const std::size_t d = t.numel() / total;
    Shape dims = t.dims;
    dims[0] = n;
    Tensor<float> out = Tensor<float>::zeros(dims);
    std::copy_n(t.data.begin(), n * d, out.data.begin());
    return out;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(10) << v;
    return ss.str();
}

// Auxiliary per-evaluation file holding both distances.
class EvalWriter {
public:
    explicit EvalWriter(const fs::path& path) : out_(path) {
        if (!out_) throw FormatError("cannot open eval file for write: " + path.string());
        out_ << "iter,n_samples,sw,fgd\n";
        out_.flush();
    }
    void append(std::uint64_t iter, std::size_t n, const EvalPoint& p) {
        out_ << iter << "," << n << "," << fmt(p.sw) << "," << (p.has_fgd ? fmt(p.fgd) : std::string()) << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

}  // namespace

Dataset dataset_from_config(const KeyValueConfig& kv, std::uint64_t default_seed) {
    if (kv.has("data.file")) return load_dataset(kv.get_string("data.file"));
    const std::string kind = kv.get_string("data.kind");
    const std::size_t n = static_cast<std::size_t>(kv.get_uint("data.n", 5000));
    const std::uint64_t seed = kv.get_uint("data.seed", default_seed);
    DataParams p;
    p.mean_x = kv.get_double("data.mean_x", p.mean_x);
    p.mean_y = kv.get_double("data.mean_y", p.mean_y);
    p.std_dev = kv.get_double("data.std", p.std_dev);
    p.modes = static_cast<int>(kv.get_int("data.modes", p.modes));
    p.ring_radius = kv.get_double("data.ring_radius", p.ring_radius);
    p.mode_sigma = kv.get_double("data.mode_sigma", p.mode_sigma);
    return make_dataset(kind, n, seed, p);
}

DenoiserSpec spec_from_config(const KeyValueConfig& kv, const std::string& prefix, const Shape* default_input) {
    DenoiserSpec spec;
    spec.arch = arch_from_name(kv.get_string(prefix + ".arch"));
    spec.hidden = kv.get_size_list(prefix + ".hidden");
    spec.time_dim = static_cast<std::size_t>(kv.get_uint(prefix + ".time_dim", 16));
    if (kv.has(prefix + ".input_dims")) {
        spec.input_dims = kv.get_size_list(prefix + ".input_dims");
    } else if (default_input) {
        spec.input_dims = *default_input;
    } else {
        throw ConfigError("missing required key '" + prefix + ".input_dims'");
    }
    spec.validate();
    return spec;
}

AdamConfig adam_from_config(const KeyValueConfig& kv) {
    AdamConfig cfg;
    cfg.lr = kv.get_double("opt.lr", cfg.lr);
    cfg.beta1 = kv.get_double("opt.beta1", cfg.beta1);
    cfg.beta2 = kv.get_double("opt.beta2", cfg.beta2);
    cfg.eps = kv.get_double("opt.eps", cfg.eps);
    return cfg;
}

DistillConfig distill_from_config(const KeyValueConfig& kv) {
    DistillConfig cfg;
    cfg.strategy = strategy_from_name(kv.get_string("distill.strategy", "dynamic"));
    cfg.rho = kv.get_double("distill.rho", cfg.rho);
    cfg.batch = static_cast<std::size_t>(kv.get_uint("distill.batch", cfg.batch));
    cfg.lambda = kv.get_double("distill.lambda", cfg.lambda);
    cfg.loss_mode = kv.get_string("distill.loss_mode", "hybrid") == "simple" ? LossMode::Simple : LossMode::Hybrid;
    cfg.iterations = static_cast<std::size_t>(kv.get_uint("distill.iterations", cfg.iterations));
    return cfg;
}

EvalSetup eval_from_config(const KeyValueConfig& kv, std::uint64_t master_seed, std::size_t iterations,
                           const std::string& default_primary, int horizon) {
    EvalSetup ev;
    ev.enabled = kv.get_bool("eval.enabled", true);
    const double pct = kv.get_double("eval.every_pct", 5.0);
    ev.every = pct <= 0.0 ? 0
                          : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                         static_cast<double>(iterations) * pct / 100.0)));
    ev.samples = static_cast<std::size_t>(kv.get_uint("eval.samples", 1000));
    ev.final_samples = static_cast<std::size_t>(kv.get_uint("eval.final_samples", 5000));
    ev.n_steps = static_cast<int>(kv.get_int("eval.n_steps", std::min(50, horizon)));
    ev.sampler = sampler_from_name(kv.get_string("eval.sampler", "ancestral"));
    ev.projections = static_cast<std::size_t>(kv.get_uint("eval.projections", 128));
    ev.primary = kv.get_string("eval.metric", default_primary);
    if (ev.primary != "sw" && ev.primary != "fgd") throw ConfigError("eval.metric must be 'sw' or 'fgd'");
    if (ev.enabled) {
        const std::size_t n = std::max(ev.samples, ev.final_samples);
        const std::uint64_t seed = CounterRng::derive_key(master_seed, "eval-data");
        if (kv.has("data.file")) {
            ev.reference = load_dataset(kv.get_string("data.file"));
        } else {
            DataParams p;
            p.mean_x = kv.get_double("data.mean_x", p.mean_x);
            p.mean_y = kv.get_double("data.mean_y", p.mean_y);
            p.std_dev = kv.get_double("data.std", p.std_dev);
            p.modes = static_cast<int>(kv.get_int("data.modes", p.modes));
            p.ring_radius = kv.get_double("data.ring_radius", p.ring_radius);
            p.mode_sigma = kv.get_double("data.mode_sigma", p.mode_sigma);
            ev.reference = make_dataset(kv.get_string("data.kind"), n, seed, p);
        }
    }
    return ev;
}

EvalPoint evaluate_model(const DenoiserModel<float>& model, const NoiseSchedule& sched, const EvalSetup& ev,
                         std::uint64_t master_seed, std::uint64_t iteration, std::size_t count) {
    CounterRng rng(CounterRng::derive_key(master_seed, "eval-gen:" + std::to_string(iteration)));
    Tensor<float> gen = generate(model, sched, ev.n_steps, ev.sampler, rng, count);
    Tensor<float> ref = first_rows(ev.reference.samples, count);
    EvalPoint p;
    const std::uint64_t proj_seed = CounterRng::derive_key(master_seed, "eval-proj");
    p.sw = sliced_wasserstein(gen, ref, ev.projections, proj_seed).value;
    const std::size_t d = gen.numel() / gen.dims[0];
    if (d <= 64) {
        p.fgd = frechet_gaussian_distance(gen, ref).value;
        p.has_fgd = true;
    }
    return p;
}

namespace {

Checkpoint make_model_checkpoint(const DenoiserModel<float>& model, const NoiseSchedule& sched,
                                 std::uint64_t iteration) {
    Checkpoint ck;
    ck.spec = model.spec();
    ck.params = model.params();
    ck.schedule_kind = "linear";
    ck.schedule_T = sched.model_horizon;
    ck.iteration = iteration;
    return ck;
}

void attach_train_state(Checkpoint& ck, const AdamState<float>& opt, const Streams& streams) {
    ck.has_opt = true;
    ck.opt_cfg = opt.config();
    ck.opt_step = opt.step_count();
    ck.opt_m = opt.first_moments();
    ck.opt_v = opt.second_moments();
    ck.has_streams = true;
    ck.streams = streams;
}

void restore_opt(AdamState<float>& opt, const Checkpoint& ck) {
    opt.restore(ck.opt_step);
    opt.first_moments() = ck.opt_m;
    opt.second_moments() = ck.opt_v;
}

double primary_of(const EvalPoint& p, const std::string& name) { return name == "fgd" ? p.fgd : p.sw; }

}  // namespace

TeacherOutcome run_teacher_core(const fs::path& out_dir, std::uint64_t master_seed, const Dataset& data,
                                const NoiseSchedule& sched, const DenoiserSpec& spec, AdamConfig opt,
                                double lambda, LossMode mode, std::size_t batch, std::size_t iterations,
                                std::size_t checkpoint_every, const EvalSetup& eval, const Checkpoint* resume) {
    fs::create_directories(out_dir);
    Streams streams = Streams::from_master(master_seed);
    DenoiserModel<float> model = resume ? model_from_checkpoint(*resume)
                                        : DenoiserModel<float>::random_init(spec, streams.init);
    DenoisingTrainer trainer(model, opt, lambda, mode, batch, sched);
    std::uint64_t start_iter = 0;
    if (resume) {
        if (!resume->has_opt || !resume->has_streams)
            throw FormatError("checkpoint lacks training state; cannot resume");
        restore_opt(trainer.optimizer(), *resume);
        streams = resume->streams;
        start_iter = resume->iteration;
    }
    MetricsWriter metrics((out_dir / "metrics.csv").string());
    EvalWriter evals((out_dir / "eval.csv").string());
    const Clock::time_point t0 = Clock::now();
    TeacherOutcome outcome;
    for (std::uint64_t iter = start_iter + 1; iter <= iterations; ++iter) {
        LossParts parts = trainer.step(data, streams);
        MetricsRecord rec;
        rec.iteration = iter;
        rec.loss_simple = parts.simple;
        if (parts.has_vlb) rec.loss_vlb = parts.vlb;
        rec.loss = parts.loss;
        rec.teacher_fwd = 0;
        rec.wall_ms = ms_since(t0);
        const bool fire = eval.enabled && ((eval.every > 0 && iter % eval.every == 0) || iter == iterations);
        if (fire) {
            const std::size_t count = iter == iterations ? eval.final_samples : eval.samples;
            EvalPoint p = evaluate_model(model, sched, eval, master_seed, iter, count);
            evals.append(iter, count, p);
            rec.metric_name = eval.primary;
            rec.metric_value = primary_of(p, eval.primary);
        }
        metrics.append(rec);
        outcome.final_loss_simple = parts.simple;
        if (checkpoint_every > 0 && iter % checkpoint_every == 0 && iter != iterations) {
            Checkpoint ck = make_model_checkpoint(model, sched, iter);
            attach_train_state(ck, trainer.optimizer(), streams);
            save_checkpoint(ck, (out_dir / ("checkpoint_" + std::to_string(iter))).string());
        }
    }
    Checkpoint ck = make_model_checkpoint(model, sched, iterations);
    attach_train_state(ck, trainer.optimizer(), streams);
    outcome.checkpoint_dir = out_dir / "checkpoint_final";
    save_checkpoint(ck, outcome.checkpoint_dir.string());
    outcome.metrics_path = out_dir / "metrics.csv";
    return outcome;
}

DistillOutcome run_distill_core(const fs::path& out_dir, std::uint64_t master_seed,
                                const DenoiserModel<float>& teacher, const NoiseSchedule& sched,
                                const DenoiserSpec& student_spec, AdamConfig opt, const DistillConfig& dcfg,
                                const EvalSetup& eval, const SyntheticSetup* synth, const Checkpoint* resume,
                                std::size_t checkpoint_every) {
    fs::create_directories(out_dir);
    Streams streams = Streams::from_master(master_seed);
    teacher.reset_forward_evals();
    DenoiserModel<float> student = resume ? model_from_checkpoint(*resume)
                                          : DenoiserModel<float>::random_init(student_spec, streams.init);
    MetricsWriter metrics((out_dir / "metrics.csv").string());
    EvalWriter evals((out_dir / "eval.csv").string());
    const Clock::time_point t0 = Clock::now();
    DistillOutcome outcome;

    auto fire_eval = [&](std::uint64_t iter, MetricsRecord& rec) {
        if (!eval.enabled) return;
        if (!((eval.every > 0 && iter % eval.every == 0) || iter == dcfg.iterations)) return;
        const std::size_t count = iter == dcfg.iterations ? eval.final_samples : eval.samples;
        EvalPoint p = evaluate_model(student, sched, eval, master_seed, iter, count);
        evals.append(iter, count, p);
        rec.metric_name = eval.primary;
        rec.metric_value = primary_of(p, eval.primary);
        if (iter == dcfg.iterations) {
            outcome.final_sw = p.sw;
            outcome.final_fgd = p.has_fgd ? p.fgd : 0.0;
        }
    };

    std::uint64_t start_iter = resume ? resume->iteration : 0;

    if (dcfg.strategy == Strategy::SyntheticDataset) {
        if (resume) throw ArgumentError("resume is not supported for the synthetic_dataset strategy");
        SyntheticSetup defaults;
        const SyntheticSetup& sy = synth ? *synth : defaults;
        std::size_t n = sy.n;
        if (n == 0)
            n = std::max<std::size_t>(
                1, dcfg.iterations * dcfg.batch / static_cast<std::size_t>(std::max(1, sy.n_steps)));
        Dataset dset = synthesize_dataset(teacher, sched, n, sy.sampler, sy.n_steps, streams.noise,
                                          "synthetic-" + arch_name(teacher.spec().arch));
        if (sy.real_fraction > 0.0) {
            if (!sy.real) throw ArgumentError("data-limited mix requested without a real dataset");
            dset = mix_dataset(*sy.real, dset, sy.real_fraction, streams.data);
        }
        save_dataset(dset, (out_dir / "synthetic.dkds").string());
        const std::uint64_t synth_cost = teacher.forward_evals();
        DenoisingTrainer trainer(student, opt, dcfg.lambda, dcfg.loss_mode, dcfg.batch, sched);
        for (std::uint64_t iter = 1; iter <= dcfg.iterations; ++iter) {
            LossParts parts = trainer.step(dset, streams);
            MetricsRecord rec;
            rec.iteration = iter;
            rec.loss_simple = parts.simple;
            if (parts.has_vlb) rec.loss_vlb = parts.vlb;
            rec.loss = parts.loss;
            rec.teacher_fwd = synth_cost;
            rec.wall_ms = ms_since(t0);
            fire_eval(iter, rec);
            metrics.append(rec);
        }
        Checkpoint ck = make_model_checkpoint(student, sched, dcfg.iterations);
        attach_train_state(ck, trainer.optimizer(), streams);
        outcome.checkpoint_dir = out_dir / "checkpoint_final";
        save_checkpoint(ck, outcome.checkpoint_dir.string());
        outcome.teacher_fwd_total = synth_cost;
    } else {
        Distiller distiller(teacher, student, opt, dcfg, sched);
        if (resume) {
            if (!resume->has_opt || !resume->has_streams || !resume->has_pool)
                throw FormatError("checkpoint lacks distillation state; cannot resume");
            restore_opt(distiller.optimizer(), *resume);
            streams = resume->streams;
            SamplePool pool = resume->pool;
            distiller.adopt_pool(std::move(pool));
        } else {
            distiller.init(streams);
        }
        for (std::uint64_t iter = start_iter + 1; iter <= dcfg.iterations; ++iter) {
            IterationStats stats = distiller.iterate(streams);
            MetricsRecord rec;
            rec.iteration = iter;
            rec.loss_simple = stats.simple;
            if (stats.has_vlb) rec.loss_vlb = stats.vlb;
            rec.loss = stats.loss;
            rec.teacher_fwd = teacher.forward_evals();
            rec.wall_ms = ms_since(t0);
            fire_eval(iter, rec);
            metrics.append(rec);
            if (checkpoint_every > 0 && iter % checkpoint_every == 0 && iter != dcfg.iterations) {
                Checkpoint ck = make_model_checkpoint(student, sched, iter);
                attach_train_state(ck, distiller.optimizer(), streams);
                ck.has_pool = true;
                ck.pool = distiller.pool();
                save_checkpoint(ck, (out_dir / ("checkpoint_" + std::to_string(iter))).string());
            }
        }
        Checkpoint ck = make_model_checkpoint(student, sched, dcfg.iterations);
        attach_train_state(ck, distiller.optimizer(), streams);
        ck.has_pool = true;
        ck.pool = distiller.pool();
        outcome.checkpoint_dir = out_dir / "checkpoint_final";
        save_checkpoint(ck, outcome.checkpoint_dir.string());
        outcome.teacher_fwd_total = teacher.forward_evals();
    }
    outcome.metrics_path = out_dir / "metrics.csv";
    outcome.eval_path = out_dir / "eval.csv";
    return outcome;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_train_teacher(const KeyValueConfig& kv) {
    const fs::path out_dir = kv.get_string("out_dir");
    const std::uint64_t seed = kv.get_uint("seed", 0);
    Dataset data = dataset_from_config(kv, seed);
    NoiseSchedule sched = NoiseSchedule::linear(static_cast<int>(kv.get_int("schedule.T", 100)));
    if (kv.get_string("schedule.kind", "linear") != "linear")
        throw ConfigError("schedule.kind must be 'linear'");
    DenoiserSpec spec = spec_from_config(kv, "model", &data.sample_dims);
    if (spec.input_dims != data.sample_dims)
        throw ConfigError("model.input_dims does not match the dataset sample dims");
    AdamConfig opt = adam_from_config(kv);
    const std::size_t iterations = static_cast<std::size_t>(kv.get_uint("train.iterations", 20000));
    const std::size_t batch = static_cast<std::size_t>(kv.get_uint("train.batch", 64));
    const double lambda = kv.get_double("train.lambda", 0.001);
    const LossMode mode =
        kv.get_string("train.loss_mode", "hybrid") == "simple" ? LossMode::Simple : LossMode::Hybrid;
    const std::size_t ck_every = static_cast<std::size_t>(kv.get_uint("train.checkpoint_every", 0));
    const std::string default_metric = data.sample_dims.size() > 1 ? "fgd" : "sw";
    EvalSetup eval = eval_from_config(kv, seed, iterations, default_metric, sched.T);
    Checkpoint resume_ck;
    const Checkpoint* resume = nullptr;
    if (kv.has("train.resume")) {
        resume_ck = load_checkpoint(kv.get_string("train.resume"), &spec);
        resume = &resume_ck;
    }
    kv.reject_unknown_keys();
    run_teacher_core(out_dir, seed, data, sched, spec, opt, lambda, mode, batch, iterations, ck_every, eval,
                     resume);
}

void cmd_distill(const KeyValueConfig& kv) {
    const fs::path out_dir = kv.get_string("out_dir");
    const std::uint64_t seed = kv.get_uint("seed", 0);
    Checkpoint teacher_ck = load_checkpoint(kv.get_string("teacher.checkpoint"));
    DenoiserModel<float> teacher = model_from_checkpoint(teacher_ck);
    NoiseSchedule sched = schedule_from_checkpoint(teacher_ck);
    DenoiserSpec student_spec = spec_from_config(kv, "student", &teacher_ck.spec.input_dims);
    AdamConfig opt = adam_from_config(kv);
    DistillConfig dcfg = distill_from_config(kv);
    const std::size_t ck_every = static_cast<std::size_t>(kv.get_uint("distill.checkpoint_every", 0));
    const std::string default_metric = teacher_ck.spec.input_dims.size() > 1 ? "fgd" : "sw";
    EvalSetup eval = eval_from_config(kv, seed, dcfg.iterations, default_metric, sched.T);

    SyntheticSetup synth;
    Dataset real;
    if (dcfg.strategy == Strategy::SyntheticDataset) {
        synth.n = static_cast<std::size_t>(kv.get_uint("distill.synthetic_n", 0));
        synth.n_steps = static_cast<int>(kv.get_int("distill.synthetic_steps", std::min(50, sched.T)));
        synth.sampler = sampler_from_name(kv.get_string("distill.synthetic_sampler", "ancestral"));
        synth.real_fraction = kv.get_double("distill.real_fraction", 0.0);
        if (synth.real_fraction > 0.0) {
            real = dataset_from_config(kv, seed);
            synth.real = &real;
        }
    }
    Checkpoint resume_ck;
    const Checkpoint* resume = nullptr;
    if (kv.has("distill.resume")) {
        resume_ck = load_checkpoint(kv.get_string("distill.resume"), &student_spec);
        resume = &resume_ck;
    }
    kv.reject_unknown_keys();
    run_distill_core(out_dir, seed, teacher, sched, student_spec, opt, dcfg, eval,
                     dcfg.strategy == Strategy::SyntheticDataset ? &synth : nullptr, resume, ck_every);
}

void cmd_synthesize(const KeyValueConfig& kv) {
    const fs::path out_dir = kv.get_string("out_dir");
    const std::uint64_t seed = kv.get_uint("seed", 0);
    Checkpoint teacher_ck = load_checkpoint(kv.get_string("teacher.checkpoint"));
    DenoiserModel<float> teacher = model_from_checkpoint(teacher_ck);
    NoiseSchedule sched = schedule_from_checkpoint(teacher_ck);
    const std::size_t n = static_cast<std::size_t>(kv.get_uint("synthesize.n"));
    const int steps = static_cast<int>(kv.get_int("synthesize.steps", 50));
    SamplerKind sampler = sampler_from_name(kv.get_string("synthesize.sampler", "ancestral"));
    const std::string out_name = kv.get_string("synthesize.out", "synthetic.dkds");
    kv.reject_unknown_keys();
    fs::create_directories(out_dir);
    Streams streams = Streams::from_master(seed);
    Dataset ds = synthesize_dataset(teacher, sched, n, sampler, steps, streams.noise,
                                    "synthetic-" + arch_name(teacher.spec().arch));
    save_dataset(ds, (out_dir / out_name).string());
    std::cout << "synthesized " << n << " samples via " << steps << " steps -> " << (out_dir / out_name).string()
              << " (teacher forwards: " << teacher.forward_evals() << ")\n";
}

void cmd_sample(const KeyValueConfig& kv) {
    const fs::path out_dir = kv.get_string("out_dir");
    const std::uint64_t seed = kv.get_uint("seed", 0);
    Checkpoint ck = load_checkpoint(kv.get_string("sample.checkpoint"));
    DenoiserModel<float> model = model_from_checkpoint(ck);
    NoiseSchedule sched = schedule_from_checkpoint(ck);
    const std::size_t count = static_cast<std::size_t>(kv.get_uint("sample.count", 64));
    const int steps = static_cast<int>(kv.get_int("sample.n_steps", 50));
    SamplerKind sampler = sampler_from_name(kv.get_string("sample.sampler", "ancestral"));
    const std::string format =
        kv.get_string("sample.format", ck.spec.input_dims.size() > 1 ? "pgm-grid" : "csv-points");
    const std::string out_name =
        kv.get_string("sample.out", format == "pgm-grid" ? "samples.pgm" : "samples.csv");
    kv.reject_unknown_keys();
    fs::create_directories(out_dir);
    CounterRng rng(CounterRng::derive_key(seed, "sample"));
    Tensor<float> batch = generate(model, sched, steps, sampler, rng, count);
    export_samples(batch, (out_dir / out_name).string(), format);
    std::cout << "wrote " << count << " samples -> " << (out_dir / out_name).string() << "\n";
}

void cmd_eval(const KeyValueConfig& kv) {
    const fs::path out_dir = kv.get_string("out_dir");
    const std::uint64_t seed = kv.get_uint("seed", 0);
    Tensor<float> subject;
    if (kv.has("eval.samples_file")) {
        subject = load_dataset(kv.get_string("eval.samples_file")).samples;
    } else {
        Checkpoint ck = load_checkpoint(kv.get_string("eval.checkpoint"));
        DenoiserModel<float> model = model_from_checkpoint(ck);
        NoiseSchedule sched = schedule_from_checkpoint(ck);
        const std::size_t count = static_cast<std::size_t>(kv.get_uint("eval.count", 5000));
        const int steps = static_cast<int>(kv.get_int("eval.n_steps", 50));
        SamplerKind sampler = sampler_from_name(kv.get_string("eval.sampler", "ancestral"));
        CounterRng rng(CounterRng::derive_key(seed, "eval-gen:standalone"));
        subject = generate(model, sched, steps, sampler, rng, count);
    }
    Tensor<float> reference;
    if (kv.has("eval.reference_file")) {
        reference = load_dataset(kv.get_string("eval.reference_file")).samples;
    } else {
        Dataset ref = dataset_from_config(kv, CounterRng::derive_key(seed, "eval-data"));
        reference = ref.samples;
    }
    const std::size_t projections = static_cast<std::size_t>(kv.get_uint("eval.projections", 128));
    kv.reject_unknown_keys();
    fs::create_directories(out_dir);
    const std::uint64_t proj_seed = CounterRng::derive_key(seed, "eval-proj");
    MetricReport sw = sliced_wasserstein(subject, reference, projections, proj_seed);
    std::ofstream report(out_dir / "eval_report.csv");
    report << "metric,value,n_a,n_b,projections,seed\n";
    report << "sw," << fmt(sw.value) << "," << sw.n_a << "," << sw.n_b << "," << sw.n_projections << ","
           << sw.seed << "\n";
    std::cout << "sw = " << fmt(sw.value) << " (n=" << sw.n_a << " vs " << sw.n_b << ")\n";
    const std::size_t d = subject.numel() / subject.dims[0];
    if (d <= 64) {
        MetricReport fgd = frechet_gaussian_distance(subject, reference);
        report << "fgd," << fmt(fgd.value) << "," << fgd.n_a << "," << fgd.n_b << ",,\n";
        std::cout << "fgd = " << fmt(fgd.value) << "\n";
    }
}

void cmd_ablate(const KeyValueConfig& kv) {
    const fs::path out_dir = kv.get_string("out_dir");
    const std::uint64_t seed = kv.get_uint("seed", 0);
    Checkpoint teacher_ck = load_checkpoint(kv.get_string("teacher.checkpoint"));
    DenoiserModel<float> teacher = model_from_checkpoint(teacher_ck);
    NoiseSchedule sched = schedule_from_checkpoint(teacher_ck);
    DenoiserSpec student_spec = spec_from_config(kv, "student", &teacher_ck.spec.input_dims);
    AdamConfig opt = adam_from_config(kv);
    DistillConfig base = distill_from_config(kv);
    const std::string kind = kv.get_string("ablate.kind", "strategies");
    const std::size_t seeds = static_cast<std::size_t>(kv.get_uint("ablate.seeds", 1));
    std::vector<double> rho_grid{0.0125, 0.05, 0.1, 0.2, 0.4, 0.8};
    if (kv.has("ablate.rho_grid")) rho_grid = kv.get_double_list("ablate.rho_grid");
    if (kind != "strategies" && kind != "rho") throw ConfigError("ablate.kind must be 'strategies' or 'rho'");
    const std::string default_metric = teacher_ck.spec.input_dims.size() > 1 ? "fgd" : "sw";
    { EvalSetup probe = eval_from_config(kv, seed, base.iterations, default_metric, sched.T); (void)probe; }
    kv.reject_unknown_keys();
    fs::create_directories(out_dir);
    std::ofstream summary(out_dir / "summary.csv");
    summary << "seed,variant,final_sw,final_fgd,teacher_fwd\n";

    for (std::size_t si = 0; si < seeds; ++si) {
        const std::uint64_t master = seed + si;
        // every variant of this seed shares dataset, initialization and
        // evaluation streams; only the strategy (or rho) differs
        EvalSetup ev = eval_from_config(kv, master, base.iterations, default_metric, sched.T);
        auto run_variant = [&](const std::string& label, const DistillConfig& cfg, const fs::path& dir) {
            DistillOutcome out =
                run_distill_core(dir, master, teacher, sched, student_spec, opt, cfg, ev, nullptr, nullptr);
            summary << master << "," << label << "," << fmt(out.final_sw) << "," << fmt(out.final_fgd) << ","
                    << out.teacher_fwd_total << "\n";
            summary.flush();
            std::cout << "seed " << master << " " << label << ": sw=" << fmt(out.final_sw)
                      << " fgd=" << fmt(out.final_fgd) << "\n";
        };
        if (kind == "strategies") {
            for (Strategy s : {Strategy::Iterative, Strategy::Shuffled, Strategy::Dynamic}) {
                DistillConfig cfg = base;
                cfg.strategy = s;
                run_variant(strategy_name(s), cfg, out_dir / ("seed" + std::to_string(si)) / strategy_name(s));
            }
        } else {
            for (double rho : rho_grid) {
                DistillConfig cfg = base;
                cfg.strategy = Strategy::Dynamic;
                cfg.rho = rho;
                std::ostringstream label;
                label << "rho_" << rho;
                run_variant(label.str(), cfg, out_dir / ("seed" + std::to_string(si)) / label.str());
            }
        }
    }
}

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"desk-scale diffusion training and data-free distillation lab"};
    app.require_subcommand(1);
    std::map<std::string, std::pair<CLI::App*, void (*)(const KeyValueConfig&)>> subs;
    std::map<CLI::App*, std::string> config_paths;
    auto add = [&](const std::string& name, const std::string& desc, void (*fn)(const KeyValueConfig&)) {
        CLI::App* sub = app.add_subcommand(name, desc);
        config_paths[sub] = "";
        sub->add_option("--config", config_paths[sub], "run config file")->required();
        subs[name] = {sub, fn};
    };
    add("train-teacher", "train a denoiser on a dataset", cmd_train_teacher);
    add("distill", "train a student from a teacher checkpoint, no data", cmd_distill);
    add("synthesize", "sample a synthetic dataset from a checkpoint", cmd_synthesize);
    add("sample", "generate and export samples from a checkpoint", cmd_sample);
    add("eval", "score generated samples against reference data", cmd_eval);
    add("ablate", "run strategy or pool-size sweeps with shared seeds", cmd_ablate);

    std::vector<const char*> argv;
    argv.push_back("diffdistill");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    try {
        for (auto& [name, sub] : subs) {
            if (sub.first->parsed()) {
                KeyValueConfig kv = KeyValueConfig::parse_file(config_paths[sub.first]);
                sub.second(kv);
                return 0;
            }
        }
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace dd
