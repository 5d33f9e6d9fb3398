#include "dd/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dd/errors.hpp"
#include "dd/rng.hpp"

namespace dd {

namespace {

std::size_t flat_dim(const Tensor<float>& t) {
    if (t.rank() == 0 || t.dims[0] == 0) throw ArgumentError("metric input batch is empty");
    return t.numel() / t.dims[0];
}

}  // namespace

void symmetric_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors) {
    eigenvectors.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigenvectors[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigenvectors[k * n + p], vkq = eigenvectors[k * n + q];
                    eigenvectors[k * n + p] = c * vkp - s * vkq;
                    eigenvectors[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i * n + i];
}

namespace {

// mean and MLE covariance of [n, d] data
void fit_gaussian(const Tensor<float>& x, std::size_t d, std::vector<double>& mu, std::vector<double>& cov) {
    const std::size_t n = x.dims[0];
    mu.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += static_cast<double>(x.data[i * d + j]);
    for (auto& v : mu) v /= static_cast<double>(n);
    cov.assign(d * d, 0.0);
    std::vector<double> c(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) c[j] = static_cast<double>(x.data[i * d + j]) - mu[j];
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = j; k < d; ++k) cov[j * d + k] += c[j] * c[k];
    }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = j; k < d; ++k) {
            cov[j * d + k] /= static_cast<double>(n);
            cov[k * d + j] = cov[j * d + k];
        }
}

// B = sqrtm(A) for symmetric PSD A (negative eigenvalues clamped)
std::vector<double> sym_sqrt(std::vector<double> a, std::size_t n) {
    std::vector<double> evals, evecs;
    symmetric_eigen(a, n, evals, evecs);
    std::vector<double> out(n * n, 0.0);
    for (std::size_t e = 0; e < n; ++e) {
        const double r = evals[e] > 0.0 ? std::sqrt(evals[e]) : 0.0;
        if (r == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = evecs[i * n + e] * r;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += vi * evecs[j * n + e];
        }
    }
    return out;
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
    std::vector<double> c(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double av = a[i * n + k];
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * b[k * n + j];
        }
    return c;
}

}  // namespace

MetricReport frechet_gaussian_distance(const Tensor<float>& a, const Tensor<float>& b) {
    const std::size_t d = flat_dim(a);
    if (d != flat_dim(b)) throw ShapeError("frechet distance: sample dims differ");
    if (a.dims[0] < 2 || b.dims[0] < 2) throw ArgumentError("frechet distance needs >= 2 samples per side");
    if (d > 64) throw ArgumentError("frechet distance limited to <= 64 dims, got " + std::to_string(d));
    std::vector<double> mu_a, mu_b, cov_a, cov_b;
    fit_gaussian(a, d, mu_a, cov_a);
    fit_gaussian(b, d, mu_b, cov_b);
    double dist = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double dm = mu_a[j] - mu_b[j];
        dist += dm * dm;
        dist += cov_a[j * d + j] + cov_b[j * d + j];
    }
    // Tr((S_A S_B)^{1/2}) via the symmetric form S_A^{1/2} S_B S_A^{1/2}
    std::vector<double> ra = sym_sqrt(cov_a, d);
    std::vector<double> m = matmul_sq(matmul_sq(ra, cov_b, d), ra, d);
    for (std::size_t i = 0; i < d; ++i)  // symmetrize rounding noise
        for (std::size_t j = i + 1; j < d; ++j) {
            const double v = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = v;
            m[j * d + i] = v;
        }
    std::vector<double> evals, evecs;
    symmetric_eigen(m, d, evals, evecs);
    for (double e : evals) dist -= 2.0 * (e > 0.0 ? std::sqrt(e) : 0.0);
    MetricReport r;
    r.name = "frechet_gaussian";
    r.value = dist > 0.0 ? dist : 0.0;
    r.n_a = a.dims[0];
    r.n_b = b.dims[0];
    return r;
}

namespace {

// 2-Wasserstein distance between two sorted 1D samples; unequal counts are
// compared on the midpoint quantile grid of the larger sample.
double wasserstein1d(std::vector<double>& xs, std::vector<double>& ys) {
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const std::size_t na = xs.size(), nb = ys.size();
    double acc = 0.0;
    if (na == nb) {
        for (std::size_t i = 0; i < na; ++i) {
            const double dd = xs[i] - ys[i];
            acc += dd * dd;
        }
        return std::sqrt(acc / static_cast<double>(na));
    }
    const std::size_t m = std::max(na, nb);
    auto quantile = [](const std::vector<double>& v, double q) {
        const double pos = q * static_cast<double>(v.size()) - 0.5;
        if (pos <= 0.0) return v.front();
        if (pos >= static_cast<double>(v.size() - 1)) return v.back();
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
    };
    for (std::size_t i = 0; i < m; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
        const double dd = quantile(xs, q) - quantile(ys, q);
        acc += dd * dd;
    }
    return std::sqrt(acc / static_cast<double>(m));
}

}  // namespace

MetricReport sliced_wasserstein(const Tensor<float>& a, const Tensor<float>& b, std::size_t n_projections,
                                std::uint64_t seed) {
    const std::size_t d = flat_dim(a);
    if (d != flat_dim(b)) throw ShapeError("sliced wasserstein: sample dims differ");
    if (n_projections < 1) throw ArgumentError("sliced wasserstein needs >= 1 projection");
    const std::size_t na = a.dims[0], nb = b.dims[0];
    CounterRng rng(CounterRng::derive_key(seed, "sw-projections"));
    std::vector<double> dir(d), pa(na), pb(nb);
    double acc = 0.0;
    for (std::size_t k = 0; k < n_projections; ++k) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& v : dir) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (auto& v : dir) v /= norm;
        for (std::size_t i = 0; i < na; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += dir[j] * static_cast<double>(a.data[i * d + j]);
            pa[i] = s;
        }
        for (std::size_t i = 0; i < nb; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += dir[j] * static_cast<double>(b.data[i * d + j]);
            pb[i] = s;
        }
        acc += wasserstein1d(pa, pb);
    }
    MetricReport r;
    r.name = "sliced_wasserstein";
    r.value = acc / static_cast<double>(n_projections);
    r.n_a = na;
    r.n_b = nb;
    r.n_projections = n_projections;
    r.seed = seed;
    return r;
}

UniformityReport t_uniformity_stat(std::span<const int> t_values, int T) {
    if (t_values.empty()) throw ArgumentError("t_uniformity_stat: empty input");
    if (T < 1) throw ArgumentError("t_uniformity_stat: bad horizon");
    constexpr int kBins = 10;
    auto bin_of = [&](int t) { return std::min<int>(kBins - 1, (t - 1) * kBins / T); };
    std::vector<std::size_t> bin_domain(kBins, 0);  // how many levels fall in each bin
    for (int t = 1; t <= T; ++t) ++bin_domain[static_cast<std::size_t>(bin_of(t))];
    UniformityReport rep;
    rep.counts.assign(kBins, 0);
    for (int t : t_values) {
        if (t < 1 || t > T) throw ArgumentError("t_uniformity_stat: t outside [1, T]");
        ++rep.counts[static_cast<std::size_t>(bin_of(t))];
    }
    rep.n = t_values.size();
    const double n = static_cast<double>(rep.n);
    for (int j = 0; j < kBins; ++j) {
        const double p = static_cast<double>(bin_domain[static_cast<std::size_t>(j)]) / static_cast<double>(T);
        if (p == 0.0) continue;
        const double expect = n * p;
        const double sd = std::sqrt(n * p * (1.0 - p));
        const double z = sd > 0.0 ? (static_cast<double>(rep.counts[static_cast<std::size_t>(j)]) - expect) / sd
                                  : 0.0;
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(z));
    }
    return rep;
}

}  // namespace dd
