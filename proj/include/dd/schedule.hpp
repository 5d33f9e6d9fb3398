#pragma once

#include <string>
#include <vector>

namespace dd {

// Diffusion noise schedule. Arrays are 1-indexed by timestep; index 0 is a
// placeholder except for alpha_bar[0] = 1. All derived quantities are kept
// in double regardless of the tensor precision in use.
//
// A respaced schedule (for reduced-step sampling) carries model_t: the
// original-chain timestep to feed the denoiser at each respaced index. For
// a full schedule model_t is the identity.
struct NoiseSchedule {
    int T = 0;
    int model_horizon = 0;  // original T; what the denoiser was conditioned on
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> beta_tilde;
    std::vector<int> model_t;

    // Linear beta schedule scaled by 1000/T so every horizon reproduces the
    // canonical endpoints beta_1 = 1e-4, beta_T = 0.02 at T = 1000. Betas
    // are capped at 0.999.
    static NoiseSchedule linear(int T);

    // Builds all derived arrays from a 1-indexed beta vector.
    static NoiseSchedule from_betas(std::vector<double> betas, std::vector<int> model_timesteps,
                                    int model_horizon);

    // Evenly spaced subsequence of length n_steps: round(linspace(1, T, n)),
    // so both endpoints are kept exactly. Gap-1 segments copy the original
    // beta bit-for-bit, which makes respaced(T) identical to the source
    // schedule.
    NoiseSchedule respaced(int n_steps) const;
    std::vector<int> respaced_timesteps(int n_steps) const;

    double recip_sqrt_alpha(int t) const;
    double eps_coef(int t) const;              // beta_t / sqrt(1 - alpha_bar_t)
    double log_beta(int t) const;
    double log_beta_tilde_floored(int t) const;  // log(max(beta_tilde, 1e-20))

    void check_t(int t) const;  // throws ArgumentError unless 1 <= t <= T
};

}  // namespace dd
