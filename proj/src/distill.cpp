#include "dd/distill.hpp"

#include <algorithm>
#include <cmath>

#include "dd/errors.hpp"

namespace dd {

Strategy strategy_from_name(const std::string& s) {
    if (s == "synthetic_dataset") return Strategy::SyntheticDataset;
    if (s == "iterative") return Strategy::Iterative;
    if (s == "shuffled") return Strategy::Shuffled;
    if (s == "dynamic") return Strategy::Dynamic;
    throw ArgumentError("unknown distillation strategy: " + s);
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::SyntheticDataset: return "synthetic_dataset";
        case Strategy::Iterative: return "iterative";
        case Strategy::Shuffled: return "shuffled";
        case Strategy::Dynamic: return "dynamic";
    }
    return "?";
}

namespace {

void gather_rows(const Tensor<float>& src, std::span<const std::size_t> idx, std::size_t d, Tensor<float>& dst) {
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * d), d,
                    dst.data.begin() + static_cast<std::ptrdiff_t>(i * d));
}

}  // namespace

SamplePool shuffle_denoise(const Tensor<float>& noise_batch, const DenoiserModel<float>& teacher,
                           const NoiseSchedule& sched, CounterRng& rng) {
    if (noise_batch.rank() == 0 || noise_batch.dims[0] == 0) throw ArgumentError("shuffle_denoise: empty batch");
    const std::size_t n = noise_batch.dims[0];
    const std::size_t d = noise_batch.numel() / n;
    SamplePool pool;
    pool.states = noise_batch;
    pool.ts.resize(n);
    for (auto& t : pool.ts) t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sched.T)));

    std::vector<std::size_t> active;
    active.reserve(n);
    Shape sdims(noise_batch.dims.begin() + 1, noise_batch.dims.end());
    for (int t = sched.T; t >= 2; --t) {
        active.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (pool.ts[i] < t) active.push_back(i);
        if (active.empty()) continue;
        Shape bdims = sdims;
        bdims.insert(bdims.begin(), active.size());
        Tensor<float> xt = Tensor<float>::zeros(bdims);
        gather_rows(pool.states, active, d, xt);
        Tensor<float> z = Tensor<float>::zeros(bdims);
        fill_normal(z, rng);
        const std::vector<int> ts(active.size(), t);
        Tensor<float> next = teacher_step(teacher, xt, ts, sched, &z).x_next;
        for (std::size_t i = 0; i < active.size(); ++i)
            std::copy_n(next.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                        pool.states.data.begin() + static_cast<std::ptrdiff_t>(active[i] * d));
    }
    return pool;
}

SamplePool init_pool(const DistillConfig& cfg, const DenoiserModel<float>& teacher, const NoiseSchedule& sched,
                     CounterRng& rng) {
    if (cfg.batch < 1) throw ArgumentError("batch size must be >= 1");
    Shape sdims = teacher.spec().input_dims;
    std::size_t capacity = cfg.batch;
    if (cfg.strategy == Strategy::Dynamic) {
        if (cfg.rho <= 0.0) throw ArgumentError("dynamic strategy needs rho > 0");
        capacity = static_cast<std::size_t>(
            std::llround(cfg.rho * static_cast<double>(sched.T) * static_cast<double>(cfg.batch)));
        if (capacity < cfg.batch)
            throw ArgumentError("pool capacity " + std::to_string(capacity) + " below batch size " +
                                std::to_string(cfg.batch));
    }
    Shape pdims = sdims;
    pdims.insert(pdims.begin(), capacity);
    SamplePool pool;
    pool.rho = cfg.rho;
    pool.states = Tensor<float>::zeros(pdims);
    pool.ts.assign(capacity, sched.T);

    if (cfg.strategy == Strategy::Iterative) {
        fill_normal(pool.states, rng);  // every item starts at t = T
        return pool;
    }
    // shuffled / dynamic: shuffle-denoise in chunks of `batch`
    const std::size_t d = shape_numel(sdims);
    for (std::size_t start = 0; start < capacity; start += cfg.batch) {
        const std::size_t chunk = std::min(cfg.batch, capacity - start);
        Shape cdims = sdims;
        cdims.insert(cdims.begin(), chunk);
        Tensor<float> noise = Tensor<float>::zeros(cdims);
        fill_normal(noise, rng);
        SamplePool part = shuffle_denoise(noise, teacher, sched, rng);
        std::copy_n(part.states.data.begin(), chunk * d,
                    pool.states.data.begin() + static_cast<std::ptrdiff_t>(start * d));
        std::copy_n(part.ts.begin(), chunk, pool.ts.begin() + static_cast<std::ptrdiff_t>(start));
    }
    return pool;
}

std::vector<std::size_t> select_subset(std::size_t capacity, std::size_t b, CounterRng& rng,
                                       SelectScratch* scratch) {
    if (b > capacity) throw ArgumentError("subset size exceeds pool capacity");
    std::vector<std::size_t> out(b);
    if (b == capacity) {
        for (std::size_t i = 0; i < b; ++i) out[i] = i;
        return out;
    }
    SelectScratch local;
    SelectScratch& s = scratch ? *scratch : local;
    if (s.ident.size() != capacity) {
        s.ident.resize(capacity);
        for (std::size_t i = 0; i < capacity; ++i) s.ident[i] = i;
    }
    s.swaps.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t j = i + rng.uniform_int(capacity - i);
        s.swaps[i] = j;
        std::swap(s.ident[i], s.ident[j]);
        out[i] = s.ident[i];
    }
    // undo so the scratch permutation stays the identity
    for (std::size_t i = b; i-- > 0;) std::swap(s.ident[i], s.ident[s.swaps[i]]);
    return out;
}

Distiller::Distiller(const DenoiserModel<float>& teacher, DenoiserModel<float>& student, AdamConfig opt,
                     DistillConfig cfg, const NoiseSchedule& sched)
    : teacher_(teacher), student_(student), cfg_(cfg), sched_(sched), opt_(opt) {
    if (teacher.spec().input_dims != student.spec().input_dims)
        throw ShapeError("teacher and student input dims differ");
    if (cfg_.lambda < 0.0) throw ArgumentError("lambda must be >= 0");
    if (cfg_.iterations < 1) throw ArgumentError("iteration budget must be >= 1");
    binding_ = build_denoiser_graph(graph_, student_.spec(), cfg_.batch);
    Shape bdims = student_.spec().input_dims;
    bdims.insert(bdims.begin(), cfg_.batch);
    in_teacher_eps_ = graph_.input("teacher_eps", bdims);
    in_teacher_vraw_ = graph_.input("teacher_vraw", bdims);
    in_logvar_lo_ = graph_.input("logvar_lo", bdims);
    in_logvar_span_ = graph_.input("logvar_span", bdims);
    in_coef_a_ = graph_.input("coef_a", bdims);
    in_coef_c_ = graph_.input("coef_c", bdims);
    loss_ = build_distill_loss(graph_, in_teacher_eps_, in_teacher_vraw_, binding_.eps, binding_.v, binding_.x,
                               in_logvar_lo_, in_logvar_span_, in_coef_a_, in_coef_c_,
                               static_cast<float>(cfg_.lambda), cfg_.loss_mode, cfg_.batch);
}

void Distiller::adopt_pool(SamplePool pool) {
    if (pool.capacity() < cfg_.batch) throw ArgumentError("adopted pool smaller than batch size");
    for (int t : pool.ts) sched_.check_t(t);
    pool_ = std::move(pool);
}

IterationStats Distiller::iterate(Streams& streams) {
    if (pool_.capacity() == 0) throw StateError("distiller pool not initialized");
    const std::size_t b = cfg_.batch;
    const std::size_t d = pool_.sample_numel();
    const std::uint64_t teacher_before = teacher_.forward_evals();

    const std::vector<std::size_t> idx = select_subset(pool_.capacity(), b, streams.select, &scratch_);
    Shape bdims = student_.spec().input_dims;
    bdims.insert(bdims.begin(), b);
    Tensor<float> xt = Tensor<float>::zeros(bdims);
    gather_rows(pool_.states, idx, d, xt);
    std::vector<int> ts(b);
    for (std::size_t i = 0; i < b; ++i) ts[i] = pool_.ts[idx[i]];

    Tensor<float> z = Tensor<float>::zeros(bdims);
    fill_normal(z, streams.noise);
    TeacherStep<float> step = teacher_step(teacher_, xt, ts, sched_, &z);

    Tensor<float> temb = time_embedding_batch<float>(ts, student_.spec().time_dim, sched_.model_horizon);
    LossCoefs<float> coefs = make_loss_coefs<float>(ts, bdims, sched_);
    Graph<float>::NamedTensors in;
    in["x"] = &xt;
    in["temb"] = &temb;
    in["teacher_eps"] = &step.out.eps_pred;
    in["teacher_vraw"] = &step.out.v_raw;
    in["logvar_lo"] = &coefs.logvar_lo;
    in["logvar_span"] = &coefs.logvar_span;
    in["coef_a"] = &coefs.coef_a;
    in["coef_c"] = &coefs.coef_c;
    for (const auto& [name, id] : binding_.params) in[name] = &student_.params().at(name);
    graph_.evaluate(in);
    graph_.backward(loss_.loss);
    opt_.update(student_.params(), graph_.input_gradients());

    // write back denoised states; exhausted items restart as fresh noise
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t item = idx[i];
        const int next_t = pool_.ts[item] - 1;
        float* dst = pool_.states.data.data() + item * d;
        if (next_t == 0) {
            for (std::size_t k = 0; k < d; ++k) dst[k] = static_cast<float>(streams.noise.normal());
            pool_.ts[item] = sched_.T;
        } else {
            std::copy_n(step.x_next.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, dst);
            pool_.ts[item] = next_t;
        }
    }
    ++pool_.generation;

    IterationStats stats;
    stats.loss = static_cast<double>(graph_.value(loss_.loss).data[0]);
    stats.simple = static_cast<double>(graph_.value(loss_.simple).data[0]);
    if (cfg_.loss_mode == LossMode::Hybrid) {
        stats.vlb = static_cast<double>(graph_.value(loss_.vlb).data[0]);
        stats.has_vlb = true;
    }
    stats.teacher_evals = teacher_.forward_evals() - teacher_before;
    stats.selected_ts = std::move(ts);
    return stats;
}

Dataset synthesize_dataset(const DenoiserModel<float>& teacher, const NoiseSchedule& sched, std::size_t n,
                           SamplerKind sampler, int n_steps, CounterRng& rng, const std::string& kind_label) {
    if (n < 1) throw ArgumentError("synthesize_dataset: n must be >= 1");
    Dataset ds;
    ds.kind = kind_label;
    ds.sample_dims = teacher.spec().input_dims;
    ds.seed = rng.key();
    ds.samples = generate(teacher, sched, n_steps, sampler, rng, n);
    return ds;
}

}  // namespace dd
