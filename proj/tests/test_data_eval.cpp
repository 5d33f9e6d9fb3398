#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dd/dataset.hpp"
#include "dd/diffusion.hpp"
#include "dd/metrics.hpp"
#include "dd/rng.hpp"

using namespace dd;

TEST_CASE("make_dataset: moments, determinism, ranges") {
    DataParams p;
    p.mean_x = 1.0;
    p.mean_y = -1.0;
    p.std_dev = 0.5;
    const std::size_t n = 100000;
    Dataset ds = make_dataset("gauss2d", n, 42, p);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += ds.samples.data[2 * i];
        my += ds.samples.data[2 * i + 1];
    }
    mx /= n;
    my /= n;
    const double bound = 3.0 * 0.5 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mx - 1.0) < bound);
    CHECK(std::abs(my + 1.0) < bound);

    Dataset again = make_dataset("gauss2d", 100, 7, p);
    Dataset again2 = make_dataset("gauss2d", 100, 7, p);
    CHECK(again.samples.data == again2.samples.data);

    Dataset shapes = make_dataset("shapes8x8", 500, 3);
    CHECK(shapes.sample_dims == Shape{1, 8, 8});
    for (float v : shapes.samples.data) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }

    Dataset rings = make_dataset("mixture2d-rings", 2000, 5);
    CHECK(rings.sample_dims == Shape{2});

    CHECK_THROWS_AS(make_dataset("nope", 10, 0), ArgumentError);
    CHECK_THROWS_AS(make_dataset("gauss2d", 0, 0), ArgumentError);
}

TEST_CASE("analytic predictor: simplification, symmetry point, least-squares agreement") {
    NoiseSchedule sched = NoiseSchedule::linear(100);
    CounterRng rng(11);
    const std::size_t B = 64;
    std::vector<double> m{0.0, 0.0};

    // m = 0, s2 = 1: predictor reduces to sqrt(1 - ab) * xt
    Tensor<double> xt = Tensor<double>::zeros({B, 2});
    fill_normal(xt, rng);
    std::vector<int> ts(B);
    for (auto& t : ts) t = 1 + static_cast<int>(rng.uniform_int(100));
    Tensor<double> pred = analytic_teacher_eps(xt, std::span<const int>(ts), m, 1.0, sched);
    for (std::size_t i = 0; i < B; ++i) {
        const double c = std::sqrt(1.0 - sched.alpha_bar[ts[i]]);
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(pred.data[i * 2 + j] == doctest::Approx(c * xt.data[i * 2 + j]).epsilon(1e-12));
    }

    // xt at the forward-process mean maps to zero
    std::vector<double> m2{1.0, -1.0};
    const int t0 = 37;
    Tensor<double> at_mean({1, 2}, {std::sqrt(sched.alpha_bar[t0]) * 1.0, std::sqrt(sched.alpha_bar[t0]) * -1.0});
    std::vector<int> one{t0};
    Tensor<double> zero = analytic_teacher_eps(at_mean, std::span<const int>(one), m2, 0.25, sched);
    CHECK(std::abs(zero.data[0]) < 1e-12);
    CHECK(std::abs(zero.data[1]) < 1e-12);

    CHECK_THROWS_AS(analytic_teacher_eps(at_mean, std::span<const int>(one), m2, 0.0, sched), ArgumentError);
}

TEST_CASE("analytic predictor matches simulated least squares and is locally optimal") {
    // With x0 ~ N(m, s2 I) the conditional mean of eps given xt is linear:
    // c * (xt - sqrt(ab) m). Fit c by least squares on simulated pairs and
    // compare with the closed form; then check +-5% coefficient
    // perturbations only increase the prediction error.
    NoiseSchedule sched = NoiseSchedule::linear(100);
    CounterRng rng(13);
    const double s2 = 0.25, s = 0.5;
    const std::vector<double> m{1.0, -1.0};
    for (int t : {5, 50, 100}) {
        const double ab = sched.alpha_bar[t];
        const std::size_t n = 1000000;
        double sxy = 0.0, sxx = 0.0;
        double mse_exact = 0.0, mse_lo = 0.0, mse_hi = 0.0;
        const double c_exact = std::sqrt(1.0 - ab) / (ab * s2 + 1.0 - ab);
        for (std::size_t i = 0; i < n; ++i) {
            const double x0 = m[i % 2] + s * rng.normal();
            const double eps = rng.normal();
            const double xt = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
            const double centered = xt - std::sqrt(ab) * m[i % 2];
            sxy += centered * eps;
            sxx += centered * centered;
            const double base = c_exact * centered;
            mse_exact += (base - eps) * (base - eps);
            mse_lo += (0.95 * base - eps) * (0.95 * base - eps);
            mse_hi += (1.05 * base - eps) * (1.05 * base - eps);
        }
        const double c_fit = sxy / sxx;
        CHECK(c_fit == doctest::Approx(c_exact).epsilon(0.01));
        CHECK(mse_exact < mse_lo);
        CHECK(mse_exact < mse_hi);
    }
}

TEST_CASE("frechet gaussian distance closed forms") {
    // identical batches -> 0
    Dataset a = make_dataset("gauss2d", 500, 1);
    MetricReport same = frechet_gaussian_distance(a.samples, a.samples);
    CHECK(same.value < 1e-8);

    // 1D, equal fitted variance, means 0 and 1 -> 1.0
    Tensor<float> x({4, 1}, {-1.f, 1.f, -1.f, 1.f});
    Tensor<float> y({4, 1}, {0.f, 2.f, 0.f, 2.f});
    CHECK(frechet_gaussian_distance(x, y).value == doctest::Approx(1.0).epsilon(1e-9));

    // 1D, equal means, fitted sigma 1 vs 2 -> (1-2)^2 = 1.0
    Tensor<float> u({2, 1}, {-1.f, 1.f});
    Tensor<float> v({2, 1}, {-2.f, 2.f});
    CHECK(frechet_gaussian_distance(u, v).value == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(frechet_gaussian_distance(Tensor<float>({1, 1}, {0.f}), u), ArgumentError);
    Tensor<float> wide = Tensor<float>::zeros({3, 65});
    CHECK_THROWS_AS(frechet_gaussian_distance(wide, wide), ArgumentError);
}

TEST_CASE("frechet distance is symmetric and shrinks with sample size") {
    CounterRng seed_rng(0);
    for (std::uint64_t s : {1ULL, 2ULL, 3ULL}) {
        Dataset a = make_dataset("mixture2d-rings", 2000, s);
        Dataset b = make_dataset("mixture2d-rings", 2000, s + 100);
        const double ab = frechet_gaussian_distance(a.samples, b.samples).value;
        const double ba = frechet_gaussian_distance(b.samples, a.samples).value;
        CHECK(std::abs(ab - ba) < 1e-8);
    }
    // same generator, growing n: the gap to zero closes
    double prev = 1e100;
    for (std::size_t n : {100ULL, 1000ULL, 10000ULL}) {
        Dataset a = make_dataset("gauss2d", n, 11);
        Dataset b = make_dataset("gauss2d", n, 999);
        const double d = frechet_gaussian_distance(a.samples, b.samples).value;
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("sliced wasserstein: identity, deltas, translation") {
    Dataset a = make_dataset("mixture2d-rings", 800, 21);
    MetricReport same = sliced_wasserstein(a.samples, a.samples, 32, 5);
    CHECK(same.value < 1e-8);

    // 1D point masses at 0 and 1
    Tensor<float> p0({3, 1}, {0.f, 0.f, 0.f});
    Tensor<float> p1({3, 1}, {1.f, 1.f, 1.f});
    CHECK(sliced_wasserstein(p0, p1, 16, 7).value == doctest::Approx(1.0).epsilon(1e-9));

    // translation: per-projection distance is |<u, v>|, so the average is
    // ||v|| E|<u, v_hat>| and never exceeds ||v||
    Tensor<float> shifted = a.samples;
    const float vx = 0.3f, vy = -0.4f;
    for (std::size_t i = 0; i < 800; ++i) {
        shifted.data[2 * i] += vx;
        shifted.data[2 * i + 1] += vy;
    }
    const double norm_v = 0.5;
    MetricReport tr = sliced_wasserstein(a.samples, shifted, 256, 9);
    CHECK(tr.value <= norm_v + 1e-9);
    // E|cos| over the circle = 2/pi; Monte Carlo with 256 directions
    CHECK(tr.value == doctest::Approx(norm_v * 2.0 / 3.14159265358979).epsilon(0.15));

    // unequal counts go through quantile interpolation and stay sane
    Tensor<float> half = Tensor<float>::zeros({400, 2});
    std::copy_n(a.samples.data.begin(), 800, half.data.begin());
    MetricReport uneq = sliced_wasserstein(a.samples, half, 64, 3);
    CHECK(uneq.value < 0.2);

    CHECK_THROWS_AS(sliced_wasserstein(a.samples, shifted, 0, 1), ArgumentError);
    Tensor<float> empty = Tensor<float>::zeros({0, 2});
    CHECK_THROWS_AS(sliced_wasserstein(empty, a.samples, 8, 1), ArgumentError);
}

TEST_CASE("t uniformity statistic") {
    // exactly uniform counts -> z = 0
    std::vector<int> flat;
    for (int rep = 0; rep < 50; ++rep)
        for (int t = 1; t <= 100; ++t) flat.push_back(t);
    UniformityReport rep = t_uniformity_stat(flat, 100);
    CHECK(rep.max_abs_z == 0.0);

    // everything in the top level: far beyond any acceptance band
    std::vector<int> peak(5000, 100);
    CHECK(t_uniformity_stat(peak, 100).max_abs_z > 10.0);

    std::vector<int> empty;
    CHECK_THROWS_AS(t_uniformity_stat(empty, 100), ArgumentError);
    std::vector<int> bad{0};
    CHECK_THROWS_AS(t_uniformity_stat(bad, 100), ArgumentError);

    // iid uniform draws pass the 3-sigma band in at least 95 of 100 seeds
    int pass = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        CounterRng rng(seed);
        std::vector<int> ts(5000);
        for (auto& t : ts) t = 1 + static_cast<int>(rng.uniform_int(100));
        if (t_uniformity_stat(ts, 100).max_abs_z < 3.0) ++pass;
    }
    CHECK(pass >= 95);
}

TEST_CASE("symmetric eigendecomposition sanity") {
    // A = Q diag(4, 1) Q^T for a rotation Q
    const double c = std::cos(0.3), s = std::sin(0.3);
    std::vector<double> a{4 * c * c + 1 * s * s, (4 - 1) * c * s, (4 - 1) * c * s, 4 * s * s + 1 * c * c};
    std::vector<double> evals, evecs;
    symmetric_eigen(a, 2, evals, evecs);
    std::sort(evals.begin(), evals.end());
    CHECK(evals[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(evals[1] == doctest::Approx(4.0).epsilon(1e-10));
}
