#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dd/diffusion.hpp"
#include "dd/errors.hpp"
#include "dd/model.hpp"
#include "dd/rng.hpp"
#include "dd/schedule.hpp"
#include "dd/tensor.hpp"

namespace dd {

enum class SamplerKind { Ancestral, Ddim };

inline SamplerKind sampler_from_name(const std::string& s) {
    if (s == "ancestral") return SamplerKind::Ancestral;
    if (s == "ddim") return SamplerKind::Ddim;
    throw ArgumentError("unknown sampler: " + s);
}

namespace detail {

// One stochastic reverse step at per-sample timesteps: mu + sigma * z, with
// the noise suppressed wherever t = 1. z may be null only if every t is 1.
template <typename S>
Tensor<S> ancestral_update(const Tensor<S>& xt, const ModelOut<S>& out, std::span<const int> ts,
                           const NoiseSchedule& sched, const Tensor<S>* z) {
    bool needs_z = false;
    for (int t : ts)
        if (t > 1) needs_z = true;
    if (needs_z && (z == nullptr || !z->same_shape(xt)))
        throw ArgumentError("ancestral step at t > 1 needs noise z with the state's shape");
    Tensor<S> mean = mean_from_eps(xt, ts, out.eps_pred, sched);
    Tensor<S> var = sigma_from_v(out.v_raw, ts, sched);
    const std::size_t d = xt.numel() / ts.size();
    Tensor<S> next = Tensor<S>::zeros(xt.dims);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            if (ts[i] == 1) {
                next.data[k] = mean.data[k];
            } else {
                const S sigma = static_cast<S>(std::sqrt(static_cast<double>(var.data[k])));
                next.data[k] = mean.data[k] + sigma * z->data[k];
            }
        }
    }
    return next;
}

// Deterministic DDIM update (eta = 0) at a uniform step index.
template <typename S>
Tensor<S> ddim_update(const Tensor<S>& xt, const Tensor<S>& eps_pred, int t, const NoiseSchedule& sched) {
    sched.check_t(t);
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = sched.alpha_bar[static_cast<std::size_t>(t) - 1];
    const double ra = std::sqrt(ab), rb = std::sqrt(1.0 - ab);
    const double pa = std::sqrt(ab_prev), pb = std::sqrt(1.0 - ab_prev);
    Tensor<S> next = Tensor<S>::zeros(xt.dims);
    for (std::size_t k = 0; k < xt.numel(); ++k) {
        const double e = static_cast<double>(eps_pred.data[k]);
        const double x0 = (static_cast<double>(xt.data[k]) - rb * e) / ra;
        next.data[k] = static_cast<S>(pa * x0 + pb * e);
    }
    return next;
}

}  // namespace detail

// One reverse step of the whole batch at step index t of `sched` (a
// respaced index when sched is respaced; the model is conditioned on
// sched.model_t[t]). Ancestral needs z for t > 1 and ignores it at t = 1;
// DDIM is deterministic and ignores z.
template <typename S>
Tensor<S> denoise_step(const DenoiserModel<S>& model, const Tensor<S>& xt, int t, const NoiseSchedule& sched,
                       SamplerKind sampler, const Tensor<S>* z) {
    sched.check_t(t);
    const std::vector<int> model_ts(xt.dims[0], sched.model_t[static_cast<std::size_t>(t)]);
    ModelOut<S> out = model.forward(xt, model_ts, sched.model_horizon);
    const std::vector<int> ts(xt.dims[0], t);
    if (sampler == SamplerKind::Ancestral) return detail::ancestral_update(xt, out, ts, sched, z);
    return detail::ddim_update(xt, out.eps_pred, t, sched);
}

// Draws `count` samples from pure noise along an evenly respaced
// subsequence of n_steps timesteps (endpoints kept). Noise draw order:
// the initial state, then one z batch per ancestral step at t > 1.
template <typename S>
Tensor<S> generate(const DenoiserModel<S>& model, const NoiseSchedule& sched, int n_steps,
                   SamplerKind sampler, CounterRng& rng, std::size_t count) {
    Shape dims = model.spec().input_dims;
    dims.insert(dims.begin(), count);
    if (count == 0) return Tensor<S>::zeros(dims);
    const NoiseSchedule sub = sched.respaced(n_steps);
    Tensor<S> x = Tensor<S>::zeros(dims);
    fill_normal(x, rng);
    Tensor<S> z = Tensor<S>::zeros(dims);
    for (int k = sub.T; k >= 1; --k) {
        if (sampler == SamplerKind::Ancestral && k > 1) {
            fill_normal(z, rng);
            x = denoise_step(model, x, k, sub, sampler, &z);
        } else {
            x = denoise_step<S>(model, x, k, sub, sampler, nullptr);
        }
    }
    return x;
}

// One stochastic teacher step on a batch at per-sample timesteps. Returns
// the denoised batch together with the teacher outputs from the same
// forward pass, so the outputs can serve as distillation targets without a
// second evaluation. Rows of z where t = 1 are ignored.
template <typename S>
struct TeacherStep {
    Tensor<S> x_next;
    ModelOut<S> out;
};

template <typename S>
TeacherStep<S> teacher_step(const DenoiserModel<S>& teacher, const Tensor<S>& xt, std::span<const int> ts,
                            const NoiseSchedule& sched, const Tensor<S>* z) {
    for (int t : ts) sched.check_t(t);
    std::vector<int> model_ts(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) model_ts[i] = sched.model_t[static_cast<std::size_t>(ts[i])];
    ModelOut<S> out = teacher.forward(xt, model_ts, sched.model_horizon);
    Tensor<S> next = detail::ancestral_update(xt, out, ts, sched, z);
    return TeacherStep<S>{std::move(next), std::move(out)};
}

// k composed teacher steps from fresh noise: the state at level T - k.
// k = 0 is pure Gaussian noise with no teacher evaluation.
template <typename S>
Tensor<S> generate_chain(const DenoiserModel<S>& teacher, const NoiseSchedule& sched, int k, CounterRng& rng,
                         std::size_t count = 1) {
    if (k < 0 || k > sched.T) throw ArgumentError("chain length outside [0, T]");
    Shape dims = teacher.spec().input_dims;
    dims.insert(dims.begin(), count);
    Tensor<S> x = Tensor<S>::zeros(dims);
    fill_normal(x, rng);
    Tensor<S> z = Tensor<S>::zeros(dims);
    for (int t = sched.T; t > sched.T - k; --t) {
        const std::vector<int> ts(count, t);
        if (t > 1) {
            fill_normal(z, rng);
            x = teacher_step(teacher, x, ts, sched, &z).x_next;
        } else {
            x = teacher_step<S>(teacher, x, ts, sched, nullptr).x_next;
        }
    }
    return x;
}

}  // namespace dd
