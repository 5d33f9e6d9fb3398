#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "dd/rng.hpp"
#include "dd/schedule.hpp"
#include "dd/tensor.hpp"

namespace dd {

// Procedural dataset: `samples` is [n, sample_dims...], float32.
struct Dataset {
    std::string kind;
    Shape sample_dims;
    Tensor<float> samples;
    std::uint64_t seed = 0;

    std::size_t size() const { return samples.rank() == 0 ? 0 : samples.dims[0]; }
    Tensor<float> sample(std::size_t i) const;
    Tensor<float> gather(std::span<const std::size_t> idx) const;
};

struct DataParams {
    // gauss2d: isotropic Gaussian N(mean, std^2 I)
    double mean_x = 1.0;
    double mean_y = -1.0;
    double std_dev = 0.5;
    // mixture2d-rings: equal-weight Gaussian modes on a circle
    int modes = 8;
    double ring_radius = 1.0;
    double mode_sigma = 0.1;
};

// kinds: "gauss2d" (2 dims), "mixture2d-rings" (2 dims),
// "shapes8x8" (jittered rectangles/crosses on a 1x8x8 canvas in [-1, 1]).
Dataset make_dataset(const std::string& kind, std::size_t n, std::uint64_t seed,
                     const DataParams& params = {});

// Dataset file ("DKDS v1"): one text header line
//   DKDS v1 <kind> <n> <rank> <d0> ... <seed>
// followed by the samples as little-endian float32, row-major.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Blends round(p * synthetic.size) real samples into a synthetic dataset of
// unchanged total size, shuffled. p = 0 leaves it purely synthetic.
Dataset mix_dataset(const Dataset& real, const Dataset& synthetic, double p, CounterRng& rng);

// Exact conditional expectation E[eps | x^t] when x^0 ~ N(m, s2 I):
//   sqrt(1-ab_t) (x^t - sqrt(ab_t) m) / (ab_t s2 + 1 - ab_t).
// Serves as the analytic reference predictor for Gaussian data.
template <typename S>
Tensor<S> analytic_teacher_eps(const Tensor<S>& xt, std::span<const int> ts, std::span<const double> m,
                               double s2, const NoiseSchedule& sched) {
    if (s2 <= 0.0) throw ArgumentError("analytic_teacher_eps: s2 must be positive");
    if (xt.rank() == 0 || xt.dims[0] != ts.size()) throw ShapeError("analytic_teacher_eps: batch mismatch");
    const std::size_t d = xt.numel() / ts.size();
    if (m.size() != d) throw ShapeError("analytic_teacher_eps: mean length mismatch");
    Tensor<S> out = Tensor<S>::zeros(xt.dims);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        sched.check_t(ts[i]);
        const double ab = sched.alpha_bar[static_cast<std::size_t>(ts[i])];
        const double num = std::sqrt(1.0 - ab);
        const double den = ab * s2 + 1.0 - ab;
        const double ra = std::sqrt(ab);
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t k = i * d + j;
            out.data[k] = static_cast<S>(num * (static_cast<double>(xt.data[k]) - ra * m[j]) / den);
        }
    }
    return out;
}

}  // namespace dd
