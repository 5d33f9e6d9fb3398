#pragma once

#include <cmath>
#include <span>

#include "dd/errors.hpp"
#include "dd/graph.hpp"
#include "dd/schedule.hpp"
#include "dd/tensor.hpp"

namespace dd {

template <typename S>
struct ModelOut {
    Tensor<S> eps_pred;
    Tensor<S> v_raw;
};

template <typename S>
struct GaussianParams {
    Tensor<S> mean;
    Tensor<S> variance;  // diagonal
};

enum class LossMode { Hybrid, Simple };

namespace detail {

template <typename S>
std::size_t batch_of(const Tensor<S>& t) {
    if (t.rank() == 0) throw ShapeError("batched op needs rank >= 1");
    return t.dims[0];
}

template <typename S>
void check_ts(const Tensor<S>& x, std::span<const int> ts, const NoiseSchedule& sched) {
    if (ts.size() != batch_of(x))
        throw ShapeError("timestep batch size " + std::to_string(ts.size()) + " vs tensor batch " +
                         std::to_string(batch_of(x)));
    for (int t : ts) sched.check_t(t);
}

}  // namespace detail

// Fills a [B, sample_dims...] tensor with f(t_i) replicated across sample i.
template <typename S, typename F>
Tensor<S> expand_per_sample(std::span<const int> ts, std::size_t sample_numel, F f) {
    Tensor<S> out = Tensor<S>::zeros({ts.size() * sample_numel});
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const S v = static_cast<S>(f(ts[i]));
        for (std::size_t j = 0; j < sample_numel; ++j) out.data[i * sample_numel + j] = v;
    }
    return out;
}

// x^t = sqrt(alpha_bar_t) x^0 + sqrt(1 - alpha_bar_t) eps, per sample.
template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, std::span<const int> ts, const Tensor<S>& eps,
                   const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) throw ShapeError("q_sample: x0 " + shape_str(x0.dims) + " vs eps " + shape_str(eps.dims));
    detail::check_ts(x0, ts, sched);
    const std::size_t d = x0.numel() / ts.size();
    Tensor<S> out = Tensor<S>::zeros(x0.dims);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double ab = sched.alpha_bar[static_cast<std::size_t>(ts[i])];
        const double ca = std::sqrt(ab), cb = std::sqrt(1.0 - ab);
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            out.data[k] = static_cast<S>(ca * static_cast<double>(x0.data[k]) +
                                         cb * static_cast<double>(eps.data[k]));
        }
    }
    return out;
}

// Single-t convenience overload (whole batch at one noise level).
template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, int t, const Tensor<S>& eps, const NoiseSchedule& sched) {
    std::vector<int> ts(detail::batch_of(x0), t);
    return q_sample(x0, std::span<const int>(ts), eps, sched);
}

// Posterior q(x^{t-1} | x^t, x^0): tractable Gaussian with mean
// c0 x^0 + c1 x^t and variance beta_tilde_t. At t = 1 the variance is
// exactly zero.
template <typename S>
GaussianParams<S> posterior_params(const Tensor<S>& x0, const Tensor<S>& xt, std::span<const int> ts,
                                   const NoiseSchedule& sched) {
    if (!x0.same_shape(xt)) throw ShapeError("posterior_params: shape mismatch");
    detail::check_ts(x0, ts, sched);
    const std::size_t d = x0.numel() / ts.size();
    GaussianParams<S> p{Tensor<S>::zeros(x0.dims), Tensor<S>::zeros(x0.dims)};
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto t = static_cast<std::size_t>(ts[i]);
        const double ab = sched.alpha_bar[t], ab_prev = sched.alpha_bar[t - 1];
        const double c0 = std::sqrt(ab_prev) * sched.beta[t] / (1.0 - ab);
        const double c1 = std::sqrt(sched.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab);
        const S var = static_cast<S>(sched.beta_tilde[t]);
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            p.mean.data[k] = static_cast<S>(c0 * static_cast<double>(x0.data[k]) +
                                            c1 * static_cast<double>(xt.data[k]));
            p.variance.data[k] = var;
        }
    }
    return p;
}

// mu_theta recovered from the eps head: (x^t - beta_t/sqrt(1-ab_t) eps) / sqrt(alpha_t).
template <typename S>
Tensor<S> mean_from_eps(const Tensor<S>& xt, std::span<const int> ts, const Tensor<S>& eps_pred,
                        const NoiseSchedule& sched) {
    if (!xt.same_shape(eps_pred)) throw ShapeError("mean_from_eps: shape mismatch");
    detail::check_ts(xt, ts, sched);
    const std::size_t d = xt.numel() / ts.size();
    Tensor<S> out = Tensor<S>::zeros(xt.dims);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double a = sched.recip_sqrt_alpha(ts[i]);
        const double c = sched.eps_coef(ts[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            out.data[k] = static_cast<S>(a * (static_cast<double>(xt.data[k]) -
                                              c * static_cast<double>(eps_pred.data[k])));
        }
    }
    return out;
}

// Learned variance: squash the raw head through (tanh + 1)/2 into [0, 1],
// then interpolate in log space between beta_tilde (floored at 1e-20 so
// t = 1 stays finite) and beta.
template <typename S>
Tensor<S> sigma_from_v(const Tensor<S>& v_raw, std::span<const int> ts, const NoiseSchedule& sched) {
    detail::check_ts(v_raw, ts, sched);
    const std::size_t d = v_raw.numel() / ts.size();
    Tensor<S> out = Tensor<S>::zeros(v_raw.dims);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double lo = sched.log_beta_tilde_floored(ts[i]);
        const double hi = sched.log_beta(ts[i]);
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            const double v = 0.5 * (std::tanh(static_cast<double>(v_raw.data[k])) + 1.0);
            out.data[k] = static_cast<S>(std::exp(v * hi + (1.0 - v) * lo));
        }
    }
    return out;
}

// KL(p || q) between diagonal Gaussians, summed over elements. Always >= 0;
// per-element rounding noise is clamped at zero.
template <typename S>
double gaussian_kl(const GaussianParams<S>& p, const GaussianParams<S>& q) {
    if (!p.mean.same_shape(q.mean) || !p.mean.same_shape(p.variance) || !q.mean.same_shape(q.variance))
        throw ShapeError("gaussian_kl: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.mean.numel(); ++i) {
        const double vp = static_cast<double>(p.variance.data[i]);
        const double vq = static_cast<double>(q.variance.data[i]);
        if (!(vp > 0.0) || !(vq > 0.0)) throw ArgumentError("gaussian_kl: non-positive variance");
        const double dmu = static_cast<double>(p.mean.data[i]) - static_cast<double>(q.mean.data[i]);
        const double e = 0.5 * (std::log(vq / vp) + vp / vq + dmu * dmu / vq - 1.0);
        acc += e > 0.0 ? e : 0.0;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Loss graphs. Both objectives share the same KL assembly, written in a
// difference form so that bitwise-identical p and q sides yield a KL of
// exactly zero:
//   KL = 0.5 * (-delta + exp(delta) - 1 + dmu^2 * exp(-logvar_q)),
//   delta = logvar_p - logvar_q.
// ---------------------------------------------------------------------------

struct LossNodes {
    NodeId loss = kNoNode;
    NodeId simple = kNoNode;
    NodeId vlb = kNoNode;
};

template <typename S>
NodeId build_kl_sum(Graph<S>& g, NodeId mu_p, NodeId logvar_p, NodeId mu_q, NodeId logvar_q) {
    NodeId delta = g.add(logvar_p, g.affine(logvar_q, S(-1), S(0)));
    NodeId dmu = g.add(mu_p, g.affine(mu_q, S(-1), S(0)));
    NodeId t1 = g.affine(delta, S(-0.5), S(0));
    NodeId t2 = g.affine(g.exp(delta), S(0.5), S(-0.5));
    NodeId half_inv_vq = g.affine(g.exp(g.affine(logvar_q, S(-1), S(0))), S(0.5), S(0));
    NodeId t3 = g.mul(g.mul(dmu, dmu), half_inv_vq);
    return g.sum(g.add(g.add(t1, t2), t3));
}

// logvar of the learned variance head, linear in v = (tanh(v_raw)+1)/2.
template <typename S>
NodeId build_model_logvar(Graph<S>& g, NodeId v_raw, NodeId logvar_lo, NodeId logvar_span) {
    NodeId v = g.affine(g.tanh(v_raw), S(0.5), S(0.5));
    return g.add(logvar_lo, g.mul(v, logvar_span));
}

// mu from the eps head: coef_a * xt - coef_c * eps. `eps` is wrapped in a
// stop-gradient when the caller optimizes the mean path elsewhere.
template <typename S>
NodeId build_model_mean(Graph<S>& g, NodeId xt, NodeId eps, NodeId coef_a, NodeId coef_c, bool stop_grad_eps) {
    NodeId e = stop_grad_eps ? g.stop_gradient(eps) : eps;
    return g.add(g.mul(coef_a, xt), g.affine(g.mul(coef_c, e), S(-1), S(0)));
}

// Data-based training objective: MSE to the true noise plus lambda times the
// KL to the forward posterior. The eps head only feels the MSE term; inside
// the KL the mean path is stop-gradiented so only the variance head learns
// from it.
template <typename S>
LossNodes build_denoising_loss(Graph<S>& g, NodeId eps_pred, NodeId v_raw, NodeId xt, NodeId eps_true,
                               NodeId post_mean, NodeId post_logvar, NodeId logvar_lo, NodeId logvar_span,
                               NodeId coef_a, NodeId coef_c, S lambda, LossMode mode, std::size_t batch) {
    if (lambda < S(0)) throw ArgumentError("lambda must be >= 0");
    LossNodes out;
    NodeId d = g.add(eps_true, g.affine(eps_pred, S(-1), S(0)));
    out.simple = g.mean(g.mul(d, d));
    if (mode == LossMode::Simple) {
        out.loss = out.simple;
        return out;
    }
    NodeId mu_q = build_model_mean(g, xt, eps_pred, coef_a, coef_c, /*stop_grad_eps=*/true);
    NodeId logvar_q = build_model_logvar(g, v_raw, logvar_lo, logvar_span);
    NodeId kl = build_kl_sum(g, post_mean, post_logvar, mu_q, logvar_q);
    out.vlb = g.affine(kl, S(1) / static_cast<S>(batch), S(0));
    out.loss = g.add(out.simple, g.affine(out.vlb, lambda, S(0)));
    return out;
}

// Teacher-to-student objective: MSE between the eps heads plus lambda times
// KL(teacher reverse distribution || student reverse distribution). Teacher
// outputs arrive as plain inputs, so no gradient can reach teacher
// parameters; the student mean path inside the KL is stop-gradiented.
// Teacher-side mean/logvar are rebuilt with the same graph ops so that a
// student with bitwise-identical parameters produces a loss of exactly zero.
template <typename S>
LossNodes build_distill_loss(Graph<S>& g, NodeId teacher_eps, NodeId teacher_vraw, NodeId student_eps,
                             NodeId student_vraw, NodeId xt, NodeId logvar_lo, NodeId logvar_span,
                             NodeId coef_a, NodeId coef_c, S lambda, LossMode mode, std::size_t batch) {
    if (lambda < S(0)) throw ArgumentError("lambda must be >= 0");
    LossNodes out;
    NodeId d = g.add(teacher_eps, g.affine(student_eps, S(-1), S(0)));
    out.simple = g.mean(g.mul(d, d));
    if (mode == LossMode::Simple) {
        out.loss = out.simple;
        return out;
    }
    NodeId mu_p = build_model_mean(g, xt, teacher_eps, coef_a, coef_c, false);
    NodeId logvar_p = build_model_logvar(g, teacher_vraw, logvar_lo, logvar_span);
    NodeId mu_q = build_model_mean(g, xt, student_eps, coef_a, coef_c, /*stop_grad_eps=*/true);
    NodeId logvar_q = build_model_logvar(g, student_vraw, logvar_lo, logvar_span);
    NodeId kl = build_kl_sum(g, mu_p, logvar_p, mu_q, logvar_q);
    out.vlb = g.affine(kl, S(1) / static_cast<S>(batch), S(0));
    out.loss = g.add(out.simple, g.affine(out.vlb, lambda, S(0)));
    return out;
}

// ---------------------------------------------------------------------------
// Per-sample coefficient tensors fed into the loss graphs.
// ---------------------------------------------------------------------------

template <typename S>
struct LossCoefs {
    Tensor<S> coef_a;       // 1/sqrt(alpha_t)
    Tensor<S> coef_c;       // beta_t / (sqrt(alpha_t) sqrt(1 - ab_t))
    Tensor<S> logvar_lo;    // log(max(beta_tilde_t, 1e-20))
    Tensor<S> logvar_span;  // log(beta_t) - logvar_lo
};

template <typename S>
LossCoefs<S> make_loss_coefs(std::span<const int> ts, const Shape& batch_dims, const NoiseSchedule& sched) {
    const std::size_t d = shape_numel(batch_dims) / ts.size();
    LossCoefs<S> c;
    c.coef_a = expand_per_sample<S>(ts, d, [&](int t) { return sched.recip_sqrt_alpha(t); });
    c.coef_c = expand_per_sample<S>(ts, d, [&](int t) { return sched.recip_sqrt_alpha(t) * sched.eps_coef(t); });
    c.logvar_lo = expand_per_sample<S>(ts, d, [&](int t) { return sched.log_beta_tilde_floored(t); });
    c.logvar_span =
        expand_per_sample<S>(ts, d, [&](int t) { return sched.log_beta(t) - sched.log_beta_tilde_floored(t); });
    c.coef_a.dims = batch_dims;
    c.coef_c.dims = batch_dims;
    c.logvar_lo.dims = batch_dims;
    c.logvar_span.dims = batch_dims;
    return c;
}

// Posterior mean and (floored) log-variance as plain tensors.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> posterior_mean_logvar(const Tensor<S>& x0, const Tensor<S>& xt,
                                                      std::span<const int> ts, const NoiseSchedule& sched) {
    GaussianParams<S> p = posterior_params(x0, xt, ts, sched);
    const std::size_t d = x0.numel() / ts.size();
    Tensor<S> logvar =
        expand_per_sample<S>(ts, d, [&](int t) { return sched.log_beta_tilde_floored(t); });
    logvar.dims = x0.dims;
    return {std::move(p.mean), std::move(logvar)};
}

struct LossParts {
    double loss = 0.0;
    double simple = 0.0;
    double vlb = 0.0;
    bool has_vlb = false;
};

// Value-level objective on precomputed model outputs (no gradients). Builds
// a throwaway graph so values match the training path bit for bit.
template <typename S>
LossParts hybrid_loss(const ModelOut<S>& out, const Tensor<S>& x0, const Tensor<S>& xt,
                      std::span<const int> ts, const Tensor<S>& eps, const NoiseSchedule& sched,
                      double lambda, LossMode mode) {
    if (!out.eps_pred.same_shape(xt) || !out.v_raw.same_shape(xt)) throw ShapeError("hybrid_loss: shape mismatch");
    detail::check_ts(xt, ts, sched);
    Graph<S> g;
    NodeId eps_pred = g.input("eps_pred", xt.dims);
    NodeId v_raw = g.input("v_raw", xt.dims);
    NodeId xt_in = g.input("xt", xt.dims);
    NodeId eps_in = g.input("eps", xt.dims);
    NodeId pm = g.input("post_mean", xt.dims);
    NodeId plv = g.input("post_logvar", xt.dims);
    NodeId lo = g.input("logvar_lo", xt.dims);
    NodeId span = g.input("logvar_span", xt.dims);
    NodeId ca = g.input("coef_a", xt.dims);
    NodeId cc = g.input("coef_c", xt.dims);
    LossNodes nodes = build_denoising_loss(g, eps_pred, v_raw, xt_in, eps_in, pm, plv, lo, span, ca, cc,
                                           static_cast<S>(lambda), mode, detail::batch_of(xt));
    LossCoefs<S> coefs = make_loss_coefs<S>(ts, xt.dims, sched);
    auto [post_mean, post_logvar] = posterior_mean_logvar(x0, xt, ts, sched);
    g.evaluate({{"eps_pred", &out.eps_pred},
                {"v_raw", &out.v_raw},
                {"xt", &xt},
                {"eps", &eps},
                {"post_mean", &post_mean},
                {"post_logvar", &post_logvar},
                {"logvar_lo", &coefs.logvar_lo},
                {"logvar_span", &coefs.logvar_span},
                {"coef_a", &coefs.coef_a},
                {"coef_c", &coefs.coef_c}});
    LossParts parts;
    parts.loss = static_cast<double>(g.value(nodes.loss).data[0]);
    parts.simple = static_cast<double>(g.value(nodes.simple).data[0]);
    if (mode == LossMode::Hybrid) {
        parts.vlb = static_cast<double>(g.value(nodes.vlb).data[0]);
        parts.has_vlb = true;
    }
    return parts;
}

// Value-level teacher-to-student objective.
template <typename S>
LossParts distill_loss(const ModelOut<S>& teacher_out, const ModelOut<S>& student_out, const Tensor<S>& xt,
                       std::span<const int> ts, const NoiseSchedule& sched, double lambda, LossMode mode) {
    if (!teacher_out.eps_pred.same_shape(xt) || !student_out.eps_pred.same_shape(xt))
        throw ShapeError("distill_loss: shape mismatch");
    detail::check_ts(xt, ts, sched);
    Graph<S> g;
    NodeId te = g.input("teacher_eps", xt.dims);
    NodeId tv = g.input("teacher_vraw", xt.dims);
    NodeId se = g.input("student_eps", xt.dims);
    NodeId sv = g.input("student_vraw", xt.dims);
    NodeId xt_in = g.input("xt", xt.dims);
    NodeId lo = g.input("logvar_lo", xt.dims);
    NodeId span = g.input("logvar_span", xt.dims);
    NodeId ca = g.input("coef_a", xt.dims);
    NodeId cc = g.input("coef_c", xt.dims);
    LossNodes nodes = build_distill_loss(g, te, tv, se, sv, xt_in, lo, span, ca, cc, static_cast<S>(lambda),
                                         mode, detail::batch_of(xt));
    LossCoefs<S> coefs = make_loss_coefs<S>(ts, xt.dims, sched);
    g.evaluate({{"teacher_eps", &teacher_out.eps_pred},
                {"teacher_vraw", &teacher_out.v_raw},
                {"student_eps", &student_out.eps_pred},
                {"student_vraw", &student_out.v_raw},
                {"xt", &xt},
                {"logvar_lo", &coefs.logvar_lo},
                {"logvar_span", &coefs.logvar_span},
                {"coef_a", &coefs.coef_a},
                {"coef_c", &coefs.coef_c}});
    LossParts parts;
    parts.loss = static_cast<double>(g.value(nodes.loss).data[0]);
    parts.simple = static_cast<double>(g.value(nodes.simple).data[0]);
    if (mode == LossMode::Hybrid) {
        parts.vlb = static_cast<double>(g.value(nodes.vlb).data[0]);
        parts.has_vlb = true;
    }
    return parts;
}

}  // namespace dd
