// Acceptance suite: one test case per release criterion, each printing a
// PASS/FAIL line. Expensive artifacts (trained teachers) are cached under
// /tmp so reruns are cheap; every run is deterministic given the pinned
// seeds.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "dd/harness.hpp"
#include "dd/metrics.hpp"
#include "dd/train.hpp"

using namespace dd;
namespace fs = std::filesystem;

namespace {

const fs::path kCache = "/tmp/dd_acceptance_cache";
const fs::path kWork = "/tmp/dd_acceptance_work";

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
                   .count() /
               1000.0;
    }
};

void report(int id, const std::string& label, bool ok, double secs, const std::string& detail) {
    std::printf("[criterion %02d] %s  %s (%.1fs)%s%s\n", id, ok ? "PASS" : "FAIL", label.c_str(), secs,
                detail.empty() ? "" : "  -- ", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(4) << v;
    return ss.str();
}

fs::path work_dir(const std::string& name) {
    const fs::path p = kWork / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---- cached teachers ------------------------------------------------------

Checkpoint cached_teacher(const std::string& name, const std::function<void(const fs::path&)>& build) {
    const fs::path dir = kCache / name;
    if (!fs::exists(dir / "checkpoint_final" / "manifest.txt")) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        build(dir);
    }
    return load_checkpoint((dir / "checkpoint_final").string());
}

EvalSetup no_eval() {
    EvalSetup ev;
    ev.enabled = false;
    return ev;
}

Checkpoint gauss_teacher() {
    return cached_teacher("teacher_gauss2d_T100_h64x3_it20k_s101", [](const fs::path& dir) {
        Dataset data = make_dataset("gauss2d", 8192, 101);  // defaults m=(1,-1), s=0.5
        NoiseSchedule sched = NoiseSchedule::linear(100);
        DenoiserSpec spec{Arch::Mlp, {2}, {64, 64, 64}, 16};
        run_teacher_core(dir, 101, data, sched, spec, AdamConfig{}, 0.001, LossMode::Hybrid, 64, 20000, 0,
                         no_eval(), nullptr);
    });
}

Checkpoint rings_teacher() {
    return cached_teacher("teacher_rings_T100_h64x3_it20k_s102", [](const fs::path& dir) {
        Dataset data = make_dataset("mixture2d-rings", 8192, 102);
        NoiseSchedule sched = NoiseSchedule::linear(100);
        DenoiserSpec spec{Arch::Mlp, {2}, {64, 64, 64}, 16};
        run_teacher_core(dir, 102, data, sched, spec, AdamConfig{}, 0.001, LossMode::Hybrid, 64, 20000, 0,
                         no_eval(), nullptr);
    });
}

Checkpoint shapes_cnn_teacher() {
    return cached_teacher("teacher_shapes_cnn12_it8k_s103", [](const fs::path& dir) {
        Dataset data = make_dataset("shapes8x8", 8192, 103);
        NoiseSchedule sched = NoiseSchedule::linear(100);
        DenoiserSpec spec{Arch::Cnn, {1, 8, 8}, {12, 12}, 16};
        run_teacher_core(dir, 103, data, sched, spec, AdamConfig{}, 0.001, LossMode::Hybrid, 64, 8000, 0,
                         no_eval(), nullptr);
    });
}

Checkpoint shapes_mlp_teacher() {
    return cached_teacher("teacher_shapes_mlp128_it8k_s104", [](const fs::path& dir) {
        Dataset data = make_dataset("shapes8x8", 8192, 104);
        NoiseSchedule sched = NoiseSchedule::linear(100);
        DenoiserSpec spec{Arch::Mlp, {1, 8, 8}, {128, 128, 128}, 16};
        run_teacher_core(dir, 104, data, sched, spec, AdamConfig{}, 0.001, LossMode::Hybrid, 64, 8000, 0,
                         no_eval(), nullptr);
    });
}

// ---- small shared helpers -------------------------------------------------

DenoiserSpec tiny_mlp_spec() { return DenoiserSpec{Arch::Mlp, {2}, {8, 8}, 4}; }

DenoiserModel<float> tiny_model(std::uint64_t seed) {
    CounterRng rng(seed);
    auto m = DenoiserModel<float>::random_init(tiny_mlp_spec(), rng);
    for (auto& [name, t] : m.params())
        if (name.rfind("head_", 0) == 0)
            for (auto& v : t.data) v = static_cast<float>(rng.normal() * 0.1);
    return m;
}

struct EvalRow {
    std::uint64_t iter = 0;
    std::size_t n = 0;
    double sw = 0.0;
    double fgd = 0.0;
    bool has_fgd = false;
};

std::vector<EvalRow> read_eval_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<EvalRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string iter_s, n_s, sw_s, fgd_s;
        std::getline(ss, iter_s, ',');
        std::getline(ss, n_s, ',');
        std::getline(ss, sw_s, ',');
        std::getline(ss, fgd_s, ',');
        EvalRow r;
        r.iter = std::stoull(iter_s);
        r.n = std::stoull(n_s);
        r.sw = std::stod(sw_s);
        if (!fgd_s.empty()) {
            r.fgd = std::stod(fgd_s);
            r.has_fgd = true;
        }
        rows.push_back(r);
    }
    return rows;
}

// population eps-MSE of a model against a target predictor on simulated
// forward-process pairs; target(i) returns the per-element reference
struct SimPairs {
    Tensor<float> xt;
    std::vector<int> ts;
    Tensor<double> oracle;  // analytic conditional mean of eps
    Tensor<double> eps;     // true noise
};

SimPairs simulate_pairs(const NoiseSchedule& sched, std::span<const double> m, double s2, std::size_t n,
                        std::uint64_t seed) {
    CounterRng rng(seed);
    const std::size_t d = m.size();
    Tensor<double> x0 = Tensor<double>::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x0.data[i * d + j] = m[j] + std::sqrt(s2) * rng.normal();
    SimPairs out;
    out.ts.resize(n);
    for (auto& t : out.ts) t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sched.T)));
    out.eps = Tensor<double>::zeros({n, d});
    fill_normal(out.eps, rng);
    Tensor<double> xt = q_sample(x0, std::span<const int>(out.ts), out.eps, sched);
    out.oracle = analytic_teacher_eps(xt, std::span<const int>(out.ts), m, s2, sched);
    out.xt = Tensor<float>::zeros({n, d});
    for (std::size_t k = 0; k < xt.numel(); ++k) out.xt.data[k] = static_cast<float>(xt.data[k]);
    return out;
}

double mse_vs(const DenoiserModel<float>& model, const SimPairs& pairs, const Tensor<double>& target,
              int horizon) {
    ModelOut<float> out = model.forward(pairs.xt, pairs.ts, horizon);
    double acc = 0.0;
    for (std::size_t k = 0; k < target.numel(); ++k) {
        const double dd = static_cast<double>(out.eps_pred.data[k]) - target.data[k];
        acc += dd * dd;
    }
    return acc / static_cast<double>(target.numel());
}

std::string mask_wall_ms(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        int commas = 0;
        for (char c : line) {
            if (c == ',') {
                ++commas;
                out << c;
            } else if (commas != 5) {
                out << c;
            }
        }
        out << "\n";
    }
    return out.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double median3(double a, double b, double c) { return std::max(std::min(a, b), std::min(std::max(a, b), c)); }

}  // namespace

// ===========================================================================

TEST_CASE("criterion 01: numeric correctness suite") {
    Timer timer;
    bool ok = true;
    std::string detail;

    // reverse-mode gradients vs central finite differences, both architectures
    for (auto spec : {DenoiserSpec{Arch::Mlp, {2}, {8, 8}, 4}, DenoiserSpec{Arch::Cnn, {1, 4, 4}, {4, 4}, 4}}) {
        CounterRng rng(11);
        auto params = init_denoiser_params<double>(spec, rng);
        for (auto& [name, t] : params)
            for (auto& v : t.data) v = rng.normal() * 0.3;
        const std::size_t B = 2;
        Graph<double> g;
        DenoiserBinding b = build_denoiser_graph(g, spec, B);
        NodeId probe = g.add(g.mean(g.mul(b.eps, b.eps)), g.mean(g.silu(b.v)));
        g.mark_output("y", probe);
        Shape dims = spec.input_dims;
        dims.insert(dims.begin(), B);
        Tensor<double> x = Tensor<double>::zeros(dims);
        fill_normal(x, rng);
        std::vector<int> ts{2, 7};
        Tensor<double> temb = time_embedding_batch<double>(ts, spec.time_dim, 10);
        Graph<double>::NamedTensors in;
        in["x"] = &x;
        in["temb"] = &temb;
        for (auto& [name, t] : params) in[name] = &t;
        g.evaluate(in);
        g.backward(probe);
        double worst = 0.0;
        const double h = 1e-5;
        for (auto& [name, t] : params) {
            const Tensor<double>& ad = *g.input_gradients().at(name);
            for (std::size_t i = 0; i < t.numel(); ++i) {
                const double keep = t.data[i];
                t.data[i] = keep + h;
                const double fp = g.evaluate(in).at("y")->data[0];
                t.data[i] = keep - h;
                const double fm = g.evaluate(in).at("y")->data[0];
                t.data[i] = keep;
                const double fd = (fp - fm) / (2.0 * h);
                worst = std::max(worst, std::abs(ad.data[i] - fd) / std::max({1e-3, std::abs(ad.data[i]), std::abs(fd)}));
            }
        }
        ok = ok && worst < 1e-6;
        detail += arch_name(spec.arch) + " grad rel err " + fmt(worst) + "; ";
    }

    // posterior mean identity between the two parameterizations
    {
        NoiseSchedule s = NoiseSchedule::linear(1000);
        CounterRng rng(7);
        double worst = 0.0;
        for (int rep = 0; rep < 1000; ++rep) {
            std::vector<int> ts{1 + static_cast<int>(rng.uniform_int(1000))};
            Tensor<double> x0 = Tensor<double>::zeros({1, 3});
            Tensor<double> eps = Tensor<double>::zeros({1, 3});
            fill_normal(x0, rng);
            fill_normal(eps, rng);
            Tensor<double> xt = q_sample(x0, std::span<const int>(ts), eps, s);
            Tensor<double> m1 = posterior_params(x0, xt, std::span<const int>(ts), s).mean;
            Tensor<double> m2 = mean_from_eps(xt, std::span<const int>(ts), eps, s);
            for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(m1.data[k] - m2.data[k]));
        }
        ok = ok && worst < 1e-9;
        detail += "mean identity " + fmt(worst) + "; ";

        double worst_rec = 0.0;
        double v = 0.0;
        for (int t = 1; t <= 1000; ++t) {
            v = s.alpha[t] * v + s.beta[t];
            worst_rec = std::max(worst_rec, std::abs(v - (1.0 - s.alpha_bar[t])));
        }
        ok = ok && worst_rec < 1e-12;
        detail += "variance recurrence " + fmt(worst_rec) + "; ";
    }

    // Gaussian KL reference values
    {
        auto mk = [](double mu, double var) {
            return GaussianParams<double>{Tensor<double>({1}, {mu}), Tensor<double>({1}, {var})};
        };
        const double e1 = std::abs(gaussian_kl(mk(0.0, 1.0), mk(1.0, 1.0)) - 0.5);
        const double e2 = std::abs(gaussian_kl(mk(0.0, 4.0), mk(0.0, 1.0)) - (1.5 - std::log(2.0)));
        ok = ok && e1 < 1e-9 && e2 < 1e-9;
        detail += "kl refs " + fmt(std::max(e1, e2));
    }

    const double secs = timer.seconds();
    ok = ok && secs < 60.0;
    report(1, "numeric correctness suite", ok, secs, detail);
    CHECK(ok);
}

TEST_CASE("criterion 02: stop-gradient contract") {
    Timer timer;
    bool ok = true;

    for (auto spec : {DenoiserSpec{Arch::Mlp, {2}, {8, 8}, 4}, DenoiserSpec{Arch::Cnn, {1, 4, 4}, {4, 4}, 4}}) {
        NoiseSchedule sched = NoiseSchedule::linear(50);
        CounterRng rng(21);
        auto params = init_denoiser_params<float>(spec, rng);
        for (auto& [name, t] : params)
            for (auto& v : t.data) v = static_cast<float>(rng.normal() * 0.2);
        const std::size_t B = 3;
        Shape dims = spec.input_dims;
        dims.insert(dims.begin(), B);
        std::vector<int> ts{1, 20, 50};

        // denoising objective: vlb gradient w.r.t. the eps head is exactly zero
        {
            Graph<float> g;
            DenoiserBinding b = build_denoiser_graph(g, spec, B);
            NodeId eps_true = g.input("eps_true", dims);
            NodeId pm = g.input("post_mean", dims);
            NodeId plv = g.input("post_logvar", dims);
            NodeId lo = g.input("logvar_lo", dims);
            NodeId span = g.input("logvar_span", dims);
            NodeId ca = g.input("coef_a", dims);
            NodeId cc = g.input("coef_c", dims);
            LossNodes nodes = build_denoising_loss(g, b.eps, b.v, b.x, eps_true, pm, plv, lo, span, ca, cc,
                                                   0.001f, LossMode::Hybrid, B);
            Tensor<float> x0 = Tensor<float>::zeros(dims), eps = Tensor<float>::zeros(dims);
            fill_normal(x0, rng);
            fill_normal(eps, rng);
            Tensor<float> xt = q_sample(x0, std::span<const int>(ts), eps, sched);
            LossCoefs<float> coefs = make_loss_coefs<float>(std::span<const int>(ts), dims, sched);
            auto [pmv, plvv] = posterior_mean_logvar(x0, xt, std::span<const int>(ts), sched);
            Tensor<float> temb = time_embedding_batch<float>(ts, spec.time_dim, sched.T);
            Graph<float>::NamedTensors in;
            in["x"] = &xt;
            in["temb"] = &temb;
            in["eps_true"] = &eps;
            in["post_mean"] = &pmv;
            in["post_logvar"] = &plvv;
            in["logvar_lo"] = &coefs.logvar_lo;
            in["logvar_span"] = &coefs.logvar_span;
            in["coef_a"] = &coefs.coef_a;
            in["coef_c"] = &coefs.coef_c;
            for (auto& [name, t] : params) in[name] = &t;
            g.evaluate(in);
            g.backward(nodes.vlb);
            bool head_zero = true, v_nonzero = false;
            for (const auto& [name, id] : b.params) {
                if (name.rfind("head_eps", 0) == 0)
                    for (float v : g.grad(id).data) head_zero = head_zero && v == 0.0f;
                if (name.rfind("head_v", 0) == 0)
                    for (float v : g.grad(id).data) v_nonzero = v_nonzero || v != 0.0f;
            }
            ok = ok && head_zero && v_nonzero;
        }

        // distillation objective: same contract for the student eps head
        {
            Graph<float> g;
            DenoiserBinding b = build_denoiser_graph(g, spec, B);
            NodeId te = g.input("teacher_eps", dims);
            NodeId tv = g.input("teacher_vraw", dims);
            NodeId lo = g.input("logvar_lo", dims);
            NodeId span = g.input("logvar_span", dims);
            NodeId ca = g.input("coef_a", dims);
            NodeId cc = g.input("coef_c", dims);
            LossNodes nodes = build_distill_loss(g, te, tv, b.eps, b.v, b.x, lo, span, ca, cc, 0.001f,
                                                 LossMode::Hybrid, B);
            Tensor<float> xt = Tensor<float>::zeros(dims), teps = Tensor<float>::zeros(dims),
                          tvr = Tensor<float>::zeros(dims);
            fill_normal(xt, rng);
            fill_normal(teps, rng);
            fill_normal(tvr, rng);
            LossCoefs<float> coefs = make_loss_coefs<float>(std::span<const int>(ts), dims, sched);
            Tensor<float> temb = time_embedding_batch<float>(ts, spec.time_dim, sched.T);
            Graph<float>::NamedTensors in;
            in["x"] = &xt;
            in["temb"] = &temb;
            in["teacher_eps"] = &teps;
            in["teacher_vraw"] = &tvr;
            in["logvar_lo"] = &coefs.logvar_lo;
            in["logvar_span"] = &coefs.logvar_span;
            in["coef_a"] = &coefs.coef_a;
            in["coef_c"] = &coefs.coef_c;
            for (auto& [name, t] : params) in[name] = &t;
            g.evaluate(in);
            g.backward(nodes.vlb);
            bool head_zero = true;
            for (const auto& [name, id] : b.params)
                if (name.rfind("head_eps", 0) == 0)
                    for (float v : g.grad(id).data) head_zero = head_zero && v == 0.0f;
            ok = ok && head_zero;
        }
    }
    report(2, "stop-gradient: vlb sends zero gradient to the eps head (bit-exact)", ok, timer.seconds(), "");
    CHECK(ok);
}

TEST_CASE("criterion 03: self-distillation identity") {
    Timer timer;
    bool ok = true;
    std::string detail;
    NoiseSchedule sched = NoiseSchedule::linear(100);
    auto teacher = tiny_model(31);
    for (Strategy s : {Strategy::Iterative, Strategy::Shuffled, Strategy::Dynamic}) {
        auto student = teacher;
        DistillConfig cfg;
        cfg.strategy = s;
        cfg.rho = 0.4;
        cfg.batch = 64;
        cfg.lambda = 0.001;
        cfg.iterations = 1000;
        Distiller dist(teacher, student, AdamConfig{}, cfg, sched);
        Streams streams = Streams::from_master(32);
        dist.init(streams);
        std::size_t zero_count = 0;
        for (int i = 0; i < 1000; ++i) {
            IterationStats stats = dist.iterate(streams);
            if (stats.loss == 0.0 && stats.simple == 0.0 && stats.vlb == 0.0) ++zero_count;
        }
        ok = ok && zero_count == 1000;
        detail += strategy_name(s) + " " + std::to_string(zero_count) + "/1000; ";
    }
    const double secs = timer.seconds();
    ok = ok && secs < 60.0;
    report(3, "self-distillation yields exactly zero loss (1000 iters, T=100, all strategies)", ok, secs, detail);
    CHECK(ok);
}

TEST_CASE("criterion 04: O(b) teacher cost per iteration vs O(Tb) chain assembly") {
    Timer timer;
    NoiseSchedule sched = NoiseSchedule::linear(100);
    auto teacher = tiny_model(41);
    auto student = tiny_model(42);
    DistillConfig cfg;
    cfg.strategy = Strategy::Dynamic;
    cfg.rho = 0.4;
    cfg.batch = 64;
    cfg.iterations = 10000;
    Distiller dist(teacher, student, AdamConfig{}, cfg, sched);
    Streams streams = Streams::from_master(43);
    dist.init(streams);
    std::size_t exact = 0;
    for (int i = 0; i < 10000; ++i)
        if (dist.iterate(streams).teacher_evals == 64) ++exact;

    // the naive construction: one batch of 64 states at uniform levels via
    // full reverse chains from noise
    teacher.reset_forward_evals();
    CounterRng rng(44);
    std::uint64_t expected_steps = 0;
    for (int i = 0; i < 64; ++i) {
        const int t = 1 + static_cast<int>(rng.uniform_int(100));
        expected_steps += static_cast<std::uint64_t>(100 - t);
        generate_chain(teacher, sched, 100 - t, rng, 1);
    }
    const std::uint64_t chain_cost = teacher.forward_evals();
    const bool ok_accounting = chain_cost == expected_steps;
    const bool ok_contrast = chain_cost > 64ULL * 100ULL / 4ULL;
    const double secs = timer.seconds();
    const bool ok = exact == 10000 && ok_accounting && ok_contrast && secs < 300.0;
    report(4, "teacher forwards per dynamic iteration = b for 10k iters; chain assembly = O(Tb)", ok, secs,
           std::to_string(exact) + "/10000 exact; one chained batch cost " + std::to_string(chain_cost) +
               " > " + std::to_string(64 * 100 / 4));
    CHECK(ok);
}

TEST_CASE("criterion 05: selected-batch t levels stay uniform across seeds") {
    Timer timer;
    // pool much larger than the aggregation window so the multinomial band
    // applies: T=50, b=64, rho=16 -> capacity 51200; warmup 5*capacity/b
    NoiseSchedule sched = NoiseSchedule::linear(50);
    const std::size_t kSeeds = 100;
    std::size_t pass = 0;
    double worst_z = 0.0;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
        auto teacher = tiny_model(500 + seed);
        auto student = tiny_model(600 + seed);
        DistillConfig cfg;
        cfg.strategy = Strategy::Dynamic;
        cfg.rho = 16.0;
        cfg.batch = 64;
        cfg.iterations = 5000;
        Distiller dist(teacher, student, AdamConfig{}, cfg, sched);
        Streams streams = Streams::from_master(700 + seed);
        dist.init(streams);
        const std::size_t warmup = 5 * dist.pool().capacity() / cfg.batch;
        for (std::size_t i = 0; i < warmup; ++i) dist.iterate(streams);
        std::vector<int> agg;
        while (agg.size() < 50ULL * 50ULL) {  // >= 50*T samples
            IterationStats stats = dist.iterate(streams);
            agg.insert(agg.end(), stats.selected_ts.begin(), stats.selected_ts.end());
        }
        const double z = t_uniformity_stat(agg, sched.T).max_abs_z;
        worst_z = std::max(worst_z, z);
        if (z < 3.0) ++pass;
    }
    const bool ok = pass >= 95;
    report(5, "t-uniformity of selected batches after warmup", ok, timer.seconds(),
           std::to_string(pass) + "/100 seeds with max |z| < 3 (worst " + fmt(worst_z) + ")");
    CHECK(ok);
}

TEST_CASE("criterion 11: determinism and persistence") {
    Timer timer;
    Checkpoint tck = gauss_teacher();
    DenoiserModel<float> teacher = model_from_checkpoint(tck);
    NoiseSchedule sched = schedule_from_checkpoint(tck);
    DenoiserSpec student{Arch::Mlp, {2}, {16, 16}, 8};
    DistillConfig cfg;
    cfg.strategy = Strategy::Dynamic;
    cfg.rho = 0.4;
    cfg.batch = 16;
    cfg.iterations = 300;
    EvalSetup ev;
    ev.enabled = true;
    ev.every = 150;
    ev.samples = 200;
    ev.final_samples = 200;
    ev.n_steps = 20;
    ev.projections = 32;
    ev.reference = make_dataset("gauss2d", 200, CounterRng::derive_key(77, "eval-data"));

    const fs::path a = work_dir("det_a"), b = work_dir("det_b");
    run_distill_core(a, 77, teacher, sched, student, AdamConfig{}, cfg, ev, nullptr, nullptr);
    run_distill_core(b, 77, teacher, sched, student, AdamConfig{}, cfg, ev, nullptr, nullptr);
    const bool metrics_equal =
        mask_wall_ms(slurp(a / "metrics.csv")) == mask_wall_ms(slurp(b / "metrics.csv")) &&
        !slurp(a / "metrics.csv").empty();
    const bool evals_equal = slurp(a / "eval.csv") == slurp(b / "eval.csv");

    // save -> load round trip is bit-exact
    Checkpoint ck_a = load_checkpoint((a / "checkpoint_final").string());
    bool roundtrip = true;
    {
        const fs::path c = work_dir("det_c");
        save_checkpoint(ck_a, c.string());
        Checkpoint back = load_checkpoint(c.string());
        for (const auto& [name, t] : ck_a.params) roundtrip = roundtrip && back.params.at(name).data == t.data;
    }

    // split run with resume reproduces the uninterrupted run bit-exactly
    const fs::path half = work_dir("det_half"), resumed = work_dir("det_resumed");
    DistillConfig cfg_half = cfg;
    cfg_half.iterations = 150;
    run_distill_core(half, 77, teacher, sched, student, AdamConfig{}, cfg_half, ev, nullptr, nullptr);
    Checkpoint half_ck = load_checkpoint((half / "checkpoint_final").string());
    run_distill_core(resumed, 77, teacher, sched, student, AdamConfig{}, cfg, ev, nullptr, &half_ck);
    Checkpoint full_ck = load_checkpoint((a / "checkpoint_final").string());
    Checkpoint res_ck = load_checkpoint((resumed / "checkpoint_final").string());
    bool resume_exact = full_ck.pool.states.data == res_ck.pool.states.data && full_ck.pool.ts == res_ck.pool.ts;
    for (const auto& [name, t] : full_ck.params)
        resume_exact = resume_exact && res_ck.params.at(name).data == t.data;

    const bool ok = metrics_equal && evals_equal && roundtrip && resume_exact;
    report(11, "bit-exact reruns, checkpoint round trip, bit-exact resume", ok, timer.seconds(),
           std::string("metrics ") + (metrics_equal ? "ok" : "DIFF") + ", evals " + (evals_equal ? "ok" : "DIFF") +
               ", roundtrip " + (roundtrip ? "ok" : "DIFF") + ", resume " + (resume_exact ? "ok" : "DIFF"));
    CHECK(ok);
}

TEST_CASE("criterion 06: distilled student tracks the analytic predictor on gaussian data") {
    Timer timer;
    Checkpoint tck = gauss_teacher();
    DenoiserModel<float> teacher = model_from_checkpoint(tck);
    NoiseSchedule sched = schedule_from_checkpoint(tck);
    const std::vector<double> m{1.0, -1.0};
    const double s2 = 0.25;

    // analytic residual floor and the teacher's own population loss
    SimPairs pairs = simulate_pairs(sched, m, s2, 20000, 61);
    double floor = 0.0;
    for (std::size_t k = 0; k < pairs.eps.numel(); ++k) {
        const double dd = pairs.eps.data[k] - pairs.oracle.data[k];
        floor += dd * dd;
    }
    floor /= static_cast<double>(pairs.eps.numel());
    const double teacher_pop_loss = mse_vs(teacher, pairs, pairs.eps, sched.T);
    const bool floor_ok = teacher_pop_loss < floor * 1.10;

    // dynamic distillation at the headline operating point
    DenoiserSpec student_spec{Arch::Mlp, {2}, {32, 32, 32}, 16};
    DistillConfig cfg;
    cfg.strategy = Strategy::Dynamic;
    cfg.rho = 0.4;
    cfg.batch = 64;
    cfg.lambda = 0.001;
    cfg.iterations = 20000;
    EvalSetup ev = no_eval();
    const fs::path dir = work_dir("c6_distill");
    run_distill_core(dir, 62, teacher, sched, student_spec, AdamConfig{}, cfg, ev, nullptr, nullptr);
    DenoiserModel<float> student =
        model_from_checkpoint(load_checkpoint((dir / "checkpoint_final").string()));

    const double mse_teacher = mse_vs(teacher, pairs, pairs.oracle, sched.T);
    const double mse_student = mse_vs(student, pairs, pairs.oracle, sched.T);
    const bool a_ok = mse_student <= 2.0 * mse_teacher;

    Dataset fresh = make_dataset("gauss2d", 5000, 63);
    CounterRng g1(CounterRng::derive_key(64, "gen-student"));
    CounterRng g2(CounterRng::derive_key(64, "gen-teacher"));
    Tensor<float> s_samples = generate(student, sched, 50, SamplerKind::Ancestral, g1, 5000);
    Tensor<float> t_samples = generate(teacher, sched, 50, SamplerKind::Ancestral, g2, 5000);
    const double sw_s = sliced_wasserstein(s_samples, fresh.samples, 128, 65).value;
    const double sw_t = sliced_wasserstein(t_samples, fresh.samples, 128, 65).value;
    const bool b_ok = sw_s <= 1.5 * sw_t;

    const double secs = timer.seconds();
    const bool ok = floor_ok && a_ok && b_ok && secs < 600.0;
    report(6, "oracle convergence on gauss2d (rho=0.4, T=100, b=64, 20k iters)", ok, secs,
           "teacher loss " + fmt(teacher_pop_loss) + " vs floor " + fmt(floor) + "; oracle mse student " +
               fmt(mse_student) + " vs 2x teacher " + fmt(2.0 * mse_teacher) + "; sw student " + fmt(sw_s) +
               " vs 1.5x teacher " + fmt(1.5 * sw_t));
    CHECK(ok);
}

TEST_CASE("criterion 07: dynamic converges faster and lands better than shuffled and lockstep") {
    Timer timer;
    Checkpoint tck = rings_teacher();
    DenoiserModel<float> teacher = model_from_checkpoint(tck);
    NoiseSchedule sched = schedule_from_checkpoint(tck);
    DenoiserSpec student_spec{Arch::Mlp, {2}, {32, 32, 32}, 16};
    const std::size_t budget = 6000;
    int order_ok = 0, speed_ok = 0;
    std::string detail;
    for (std::uint64_t master = 201; master <= 205; ++master) {
        EvalSetup ev;
        ev.enabled = true;
        ev.every = budget / 20;  // every 5%
        ev.samples = 1000;
        ev.final_samples = 2000;
        ev.n_steps = 50;
        ev.projections = 128;
        ev.primary = "sw";
        ev.reference = make_dataset("mixture2d-rings", 2000, CounterRng::derive_key(master, "eval-data"));
        std::map<Strategy, DistillOutcome> out;
        std::map<Strategy, std::vector<EvalRow>> curves;
        for (Strategy s : {Strategy::Iterative, Strategy::Shuffled, Strategy::Dynamic}) {
            DistillConfig cfg;
            cfg.strategy = s;
            cfg.rho = 0.4;
            cfg.batch = 64;
            cfg.lambda = 0.001;
            cfg.iterations = budget;
            const fs::path dir = work_dir("c7_s" + std::to_string(master) + "_" + strategy_name(s));
            out[s] = run_distill_core(dir, master, teacher, sched, student_spec, AdamConfig{}, cfg, ev,
                                      nullptr, nullptr);
            curves[s] = read_eval_csv(out[s].eval_path);
        }
        const double d = out[Strategy::Dynamic].final_sw;
        const double sh = out[Strategy::Shuffled].final_sw;
        const double it = out[Strategy::Iterative].final_sw;
        if (d <= sh && sh <= it) ++order_ok;
        std::uint64_t reached = budget + 1;
        for (const EvalRow& row : curves[Strategy::Dynamic])
            if (row.sw <= it) {
                reached = row.iter;
                break;
            }
        if (reached <= budget * 6 / 10) ++speed_ok;
        detail += "s" + std::to_string(master) + ": dyn " + fmt(d) + " shuf " + fmt(sh) + " iter " + fmt(it) +
                  " reach " + std::to_string(reached) + "; ";
    }
    const bool ok = order_ok >= 4 && speed_ok >= 4;
    report(7, "strategy ordering (dynamic <= shuffled <= lockstep) and 60%-budget convergence", ok,
           timer.seconds(),
           "order " + std::to_string(order_ok) + "/5, speed " + std::to_string(speed_ok) + "/5 | " + detail);
    CHECK(ok);
}

TEST_CASE("criterion 08: pool scale improves results up to a plateau") {
    Timer timer;
    Checkpoint tck = rings_teacher();
    DenoiserModel<float> teacher = model_from_checkpoint(tck);
    NoiseSchedule sched = schedule_from_checkpoint(tck);
    DenoiserSpec student_spec{Arch::Mlp, {2}, {32, 32, 32}, 16};
    const std::vector<double> grid{0.0125, 0.05, 0.1, 0.2, 0.4, 0.8};
    const std::size_t budget = 6000;
    std::map<double, double> median_sw;
    std::string detail;
    for (double rho : grid) {
        std::vector<double> finals;
        for (std::uint64_t master = 301; master <= 303; ++master) {
            EvalSetup ev;
            ev.enabled = true;
            ev.every = 0;  // final evaluation only
            ev.final_samples = 5000;
            ev.n_steps = 50;
            ev.projections = 128;
            ev.primary = "sw";
            ev.reference = make_dataset("mixture2d-rings", 5000, CounterRng::derive_key(master, "eval-data"));
            DistillConfig cfg;
            cfg.strategy = Strategy::Dynamic;
            cfg.rho = rho;
            cfg.batch = 64;
            cfg.lambda = 0.001;
            cfg.iterations = budget;
            std::ostringstream name;
            name << "c8_r" << rho << "_s" << master;
            DistillOutcome out = run_distill_core(work_dir(name.str()), master, teacher, sched, student_spec,
                                                  AdamConfig{}, cfg, ev, nullptr, nullptr);
            finals.push_back(out.final_sw);
        }
        median_sw[rho] = median3(finals[0], finals[1], finals[2]);
        detail += "rho " + fmt(rho) + ": " + fmt(median_sw[rho]) + "; ";
    }
    const bool gain_ok = median_sw[0.4] <= 0.90 * median_sw[0.0125];
    const bool plateau_ok = std::abs(median_sw[0.8] - median_sw[0.4]) <= 0.05 * median_sw[0.4];
    const bool ok = gain_ok && plateau_ok;
    report(8, "pool-scale sweep: >=10% gain at rho=0.4 over 0.0125, <=5% drift from 0.4 to 0.8", ok,
           timer.seconds(), detail);
    CHECK(ok);
}

TEST_CASE("criterion 09: dynamic distillation beats the synthetic-dataset baseline on images") {
    Timer timer;
    Checkpoint tck = shapes_cnn_teacher();
    DenoiserModel<float> teacher = model_from_checkpoint(tck);
    NoiseSchedule sched = schedule_from_checkpoint(tck);
    DenoiserSpec student_spec{Arch::Cnn, {1, 8, 8}, {6, 6}, 16};
    const std::size_t budget = 2500;
    int wins = 0;
    std::string detail;
    for (std::uint64_t master = 401; master <= 405; ++master) {
        EvalSetup ev;
        ev.enabled = true;
        ev.every = 0;
        ev.final_samples = 2000;
        ev.n_steps = 20;
        ev.projections = 64;
        ev.primary = "fgd";
        ev.reference = make_dataset("shapes8x8", 2000, CounterRng::derive_key(master, "eval-data"));
        DistillConfig cfg;
        cfg.strategy = Strategy::Dynamic;
        cfg.rho = 0.4;
        cfg.batch = 64;
        cfg.lambda = 0.001;
        cfg.iterations = budget;
        DistillOutcome dyn = run_distill_core(work_dir("c9_dyn_s" + std::to_string(master)), master, teacher,
                                              sched, student_spec, AdamConfig{}, cfg, ev, nullptr, nullptr);
        // the baseline gets the same total teacher budget, spent on samples
        SyntheticSetup sy;
        sy.n_steps = 50;
        sy.n = std::max<std::size_t>(1, dyn.teacher_fwd_total / 50);
        DistillConfig scfg = cfg;
        scfg.strategy = Strategy::SyntheticDataset;
        DistillOutcome syn = run_distill_core(work_dir("c9_syn_s" + std::to_string(master)), master, teacher,
                                              sched, student_spec, AdamConfig{}, scfg, ev, &sy, nullptr);
        if (dyn.final_fgd < syn.final_fgd) ++wins;
        detail += "s" + std::to_string(master) + ": dyn " + fmt(dyn.final_fgd) + " vs syn " +
                  fmt(syn.final_fgd) + "; ";
    }
    const bool ok = wins >= 4;
    report(9, "shapes8x8: dynamic < synthetic baseline at equal teacher budget", ok, timer.seconds(),
           std::to_string(wins) + "/5 wins | " + detail);
    CHECK(ok);
}

TEST_CASE("criterion 10: cross-architecture distillation beats its synthetic counterpart") {
    Timer timer;
    Checkpoint cnn_t = shapes_cnn_teacher();
    Checkpoint mlp_t = shapes_mlp_teacher();
    const DenoiserSpec cnn_student{Arch::Cnn, {1, 8, 8}, {6, 6}, 16};
    const DenoiserSpec mlp_student{Arch::Mlp, {1, 8, 8}, {64, 64, 64}, 16};
    const std::size_t budget = 1500;
    bool ok = true;
    std::string detail;
    for (const auto& [tname, tck] : {std::pair<std::string, Checkpoint*>{"mlp", &mlp_t}, {"cnn", &cnn_t}}) {
        DenoiserModel<float> teacher = model_from_checkpoint(*tck);
        NoiseSchedule sched = schedule_from_checkpoint(*tck);
        for (const auto& [sname, sspec] :
             {std::pair<std::string, const DenoiserSpec*>{"mlp", &mlp_student}, {"cnn", &cnn_student}}) {
            std::vector<double> dyn_f, syn_f;
            for (std::uint64_t master = 501; master <= 503; ++master) {
                EvalSetup ev;
                ev.enabled = true;
                ev.every = 0;
                ev.final_samples = 2000;
                ev.n_steps = 20;
                ev.projections = 64;
                ev.primary = "fgd";
                ev.reference = make_dataset("shapes8x8", 2000, CounterRng::derive_key(master, "eval-data"));
                DistillConfig cfg;
                cfg.strategy = Strategy::Dynamic;
                cfg.rho = 0.4;
                cfg.batch = 64;
                cfg.lambda = 0.001;
                cfg.iterations = budget;
                const std::string tag = tname + "2" + sname + "_s" + std::to_string(master);
                DistillOutcome dyn = run_distill_core(work_dir("c10_dyn_" + tag), master, teacher, sched,
                                                      *sspec, AdamConfig{}, cfg, ev, nullptr, nullptr);
                SyntheticSetup sy;
                sy.n_steps = 50;
                sy.n = std::max<std::size_t>(1, dyn.teacher_fwd_total / 50);
                DistillConfig scfg = cfg;
                scfg.strategy = Strategy::SyntheticDataset;
                DistillOutcome syn = run_distill_core(work_dir("c10_syn_" + tag), master, teacher, sched,
                                                      *sspec, AdamConfig{}, scfg, ev, &sy, nullptr);
                dyn_f.push_back(dyn.final_fgd);
                syn_f.push_back(syn.final_fgd);
            }
            const double dmed = median3(dyn_f[0], dyn_f[1], dyn_f[2]);
            const double smed = median3(syn_f[0], syn_f[1], syn_f[2]);
            const bool finite = std::isfinite(dmed) && std::isfinite(smed);
            const bool pair_ok = finite && dmed < smed;
            ok = ok && pair_ok;
            detail += tname + "->" + sname + ": dyn " + fmt(dmed) + " vs syn " + fmt(smed) + "; ";
        }
    }
    report(10, "all four teacher->student pairs beat their synthetic counterpart (median of 3 seeds)", ok,
           timer.seconds(), detail);
    CHECK(ok);
}
