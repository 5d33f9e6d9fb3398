#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dd/tensor.hpp"

namespace dd {

struct MetricReport {
    std::string name;
    double value = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::size_t n_projections = 0;  // sliced Wasserstein only
    std::uint64_t seed = 0;         // projection seed where applicable
};

// Frechet distance between Gaussian fits of two sample batches [n, dims...]:
// |mu_A - mu_B|^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2}). Covariances are the
// maximum-likelihood (1/n) fits; the matrix square root goes through a
// symmetric eigendecomposition with negative eigenvalues clamped at zero.
// Restricted to flattened sample dimension <= 64.
MetricReport frechet_gaussian_distance(const Tensor<float>& a, const Tensor<float>& b);

// Mean over random unit directions of the 1D 2-Wasserstein distance between
// the projected samples (sorted pairing; unequal counts via midpoint
// quantile interpolation).
MetricReport sliced_wasserstein(const Tensor<float>& a, const Tensor<float>& b, std::size_t n_projections,
                                std::uint64_t seed);

// Histogram of noise levels over 10 equal bins of [1, T], with the largest
// per-bin deviation from the exact uniform expectation in multinomial
// z-score units.
struct UniformityReport {
    std::vector<std::size_t> counts;
    double max_abs_z = 0.0;
    std::size_t n = 0;
};
UniformityReport t_uniformity_stat(std::span<const int> t_values, int T);

// Symmetric eigendecomposition (cyclic Jacobi), exposed for tests.
// a is n x n row-major and must be symmetric; eigenvalues ascending.
void symmetric_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors);

}  // namespace dd
