#include "dd/schedule.hpp"

#include <cmath>

#include "dd/errors.hpp"

namespace dd {

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T)
        throw ArgumentError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
}

NoiseSchedule NoiseSchedule::linear(int T) {
    if (T < 1) throw ArgumentError("schedule horizon must be >= 1");
    const double scale = 1000.0 / static_cast<double>(T);
    const double lo = 1e-4 * scale;
    const double hi = 0.02 * scale;
    std::vector<double> betas(static_cast<std::size_t>(T) + 1, 0.0);
    std::vector<int> ident(static_cast<std::size_t>(T) + 1, 0);
    for (int t = 1; t <= T; ++t) {
        double b = T == 1 ? lo : lo + (hi - lo) * static_cast<double>(t - 1) / static_cast<double>(T - 1);
        if (b > 0.999) b = 0.999;
        betas[static_cast<std::size_t>(t)] = b;
        ident[static_cast<std::size_t>(t)] = t;
    }
    return from_betas(std::move(betas), std::move(ident), T);
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas, std::vector<int> model_timesteps,
                                        int model_horizon) {
    const int T = static_cast<int>(betas.size()) - 1;
    if (T < 1) throw ArgumentError("schedule needs at least one step");
    NoiseSchedule s;
    s.T = T;
    s.model_horizon = model_horizon;
    s.beta = std::move(betas);
    s.model_t = std::move(model_timesteps);
    s.alpha.assign(s.beta.size(), 0.0);
    s.alpha_bar.assign(s.beta.size(), 0.0);
    s.beta_tilde.assign(s.beta.size(), 0.0);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const double b = s.beta[i];
        if (!(b > 0.0 && b < 1.0))
            throw ArgumentError("beta_" + std::to_string(t) + " = " + std::to_string(b) + " outside (0, 1)");
        s.alpha[i] = 1.0 - b;
        s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
        if (!(s.alpha_bar[i] < s.alpha_bar[i - 1]))
            throw ArgumentError("alpha_bar not strictly decreasing at t=" + std::to_string(t));
        s.beta_tilde[i] = (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]) * b;
        if (s.beta_tilde[i] > b)
            throw ArgumentError("beta_tilde exceeds beta at t=" + std::to_string(t));
    }
    return s;
}

std::vector<int> NoiseSchedule::respaced_timesteps(int n_steps) const {
    if (n_steps < 1) throw ArgumentError("n_steps must be >= 1");
    if (n_steps > T) throw ArgumentError("n_steps " + std::to_string(n_steps) + " exceeds horizon " + std::to_string(T));
    std::vector<int> ts(static_cast<std::size_t>(n_steps));
    if (n_steps == 1) {
        ts[0] = T;  // a single jump must start from pure noise
        return ts;
    }
    for (int j = 0; j < n_steps; ++j)
        ts[static_cast<std::size_t>(j)] = static_cast<int>(
            std::llround(1.0 + static_cast<double>(T - 1) * static_cast<double>(j) / static_cast<double>(n_steps - 1)));
    return ts;
}

NoiseSchedule NoiseSchedule::respaced(int n_steps) const {
    const std::vector<int> ts = respaced_timesteps(n_steps);
    std::vector<double> betas(ts.size() + 1, 0.0);
    std::vector<int> mt(ts.size() + 1, 0);
    int prev = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int tk = ts[k];
        if (tk - prev == 1) {
            betas[k + 1] = beta[static_cast<std::size_t>(tk)];
        } else {
            double prod = 1.0;
            for (int t = prev + 1; t <= tk; ++t) prod *= alpha[static_cast<std::size_t>(t)];
            betas[k + 1] = 1.0 - prod;
        }
        mt[k + 1] = model_t[static_cast<std::size_t>(tk)];
        prev = tk;
    }
    return from_betas(std::move(betas), std::move(mt), model_horizon);
}

double NoiseSchedule::recip_sqrt_alpha(int t) const {
    check_t(t);
    return 1.0 / std::sqrt(alpha[static_cast<std::size_t>(t)]);
}

double NoiseSchedule::eps_coef(int t) const {
    check_t(t);
    return beta[static_cast<std::size_t>(t)] / std::sqrt(1.0 - alpha_bar[static_cast<std::size_t>(t)]);
}

double NoiseSchedule::log_beta(int t) const {
    check_t(t);
    return std::log(beta[static_cast<std::size_t>(t)]);
}

double NoiseSchedule::log_beta_tilde_floored(int t) const {
    check_t(t);
    const double bt = beta_tilde[static_cast<std::size_t>(t)];
    return std::log(bt > 1e-20 ? bt : 1e-20);
}

}  // namespace dd
