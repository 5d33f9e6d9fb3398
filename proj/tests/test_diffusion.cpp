#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dd/diffusion.hpp"
#include "dd/rng.hpp"
#include "dd/schedule.hpp"

using namespace dd;

TEST_CASE("linear schedule endpoints and invariants") {
    NoiseSchedule s = NoiseSchedule::linear(1000);
    CHECK(s.beta[1] == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(s.beta[1000] == doctest::Approx(0.02).epsilon(1e-12));
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        CHECK(s.beta_tilde[t] <= s.beta[t]);
        CHECK(s.beta[t] > 0.0);
        CHECK(s.beta[t] < 1.0);
    }
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(s.beta_tilde[1] == 0.0);

    NoiseSchedule one = NoiseSchedule::linear(1);
    CHECK(one.alpha_bar[1] == 1.0 - one.beta[1]);

    NoiseSchedule four = NoiseSchedule::linear(4);
    double prod = 1.0;
    for (int t = 1; t <= 4; ++t) prod *= 1.0 - four.beta[t];
    CHECK(four.alpha_bar[4] == doctest::Approx(prod).epsilon(1e-15));

    CHECK_THROWS_AS(NoiseSchedule::linear(0), ArgumentError);
}

TEST_CASE("forward variance recurrence equals closed form") {
    NoiseSchedule s = NoiseSchedule::linear(400);
    double v = 0.0;
    for (int t = 1; t <= s.T; ++t) {
        v = s.alpha[t] * v + s.beta[t];
        CHECK(std::abs(v - (1.0 - s.alpha_bar[t])) < 1e-12);
    }
}

TEST_CASE("q_sample limits and argument checks") {
    NoiseSchedule s = NoiseSchedule::linear(100);
    CounterRng rng(5);
    Tensor<double> x0 = Tensor<double>::zeros({3, 2});
    fill_normal(x0, rng);
    Tensor<double> zero = Tensor<double>::zeros({3, 2});
    std::vector<int> ts{1, 50, 100};

    Tensor<double> clean = q_sample(x0, std::span<const int>(ts), zero, s);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(clean.data[i * 2 + j] ==
                  doctest::Approx(std::sqrt(s.alpha_bar[ts[i]]) * x0.data[i * 2 + j]).epsilon(1e-14));

    Tensor<double> eps = Tensor<double>::zeros({3, 2});
    fill_normal(eps, rng);
    Tensor<double> noisy = q_sample(zero, std::span<const int>(ts), eps, s);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(noisy.data[i * 2 + j] ==
                  doctest::Approx(std::sqrt(1.0 - s.alpha_bar[ts[i]]) * eps.data[i * 2 + j]).epsilon(1e-14));

    std::vector<int> bad{0, 50, 100};
    CHECK_THROWS_AS(q_sample(x0, std::span<const int>(bad), eps, s), ArgumentError);
    std::vector<int> bad2{1, 50, 101};
    CHECK_THROWS_AS(q_sample(x0, std::span<const int>(bad2), eps, s), ArgumentError);
}

TEST_CASE("posterior mean: t=1 collapse, variance, identity with eps form") {
    NoiseSchedule s = NoiseSchedule::linear(100);
    CounterRng rng(7);
    Tensor<double> x0 = Tensor<double>::zeros({4, 3});
    Tensor<double> eps = Tensor<double>::zeros({4, 3});
    fill_normal(x0, rng);
    fill_normal(eps, rng);

    std::vector<int> t1{1, 1, 1, 1};
    Tensor<double> x1 = q_sample(x0, std::span<const int>(t1), eps, s);
    GaussianParams<double> p1 = posterior_params(x0, x1, std::span<const int>(t1), s);
    for (std::size_t k = 0; k < x0.numel(); ++k) {
        CHECK(p1.mean.data[k] == doctest::Approx(x0.data[k]).epsilon(1e-10));
        CHECK(p1.variance.data[k] == 0.0);  // beta_tilde_1 exactly
    }

    // Over random triples the posterior mean equals the eps-parameterized
    // mean evaluated at the true noise.
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<int> ts{1 + static_cast<int>(rng.uniform_int(100))};
        Tensor<double> a = Tensor<double>::zeros({1, 3});
        Tensor<double> e = Tensor<double>::zeros({1, 3});
        fill_normal(a, rng);
        fill_normal(e, rng);
        Tensor<double> xt = q_sample(a, std::span<const int>(ts), e, s);
        Tensor<double> m1 = posterior_params(a, xt, std::span<const int>(ts), s).mean;
        Tensor<double> m2 = mean_from_eps(xt, std::span<const int>(ts), e, s);
        for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(m1.data[k] - m2.data[k]));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("mean_from_eps limits") {
    NoiseSchedule s = NoiseSchedule::linear(1000);
    CounterRng rng(11);
    Tensor<double> xt = Tensor<double>::zeros({2, 2});
    fill_normal(xt, rng);
    Tensor<double> zero = Tensor<double>::zeros({2, 2});
    std::vector<int> ts{10, 500};
    Tensor<double> m = mean_from_eps(xt, std::span<const int>(ts), zero, s);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(m.data[i * 2 + j] ==
                  doctest::Approx(xt.data[i * 2 + j] / std::sqrt(s.alpha[ts[i]])).epsilon(1e-14));

    // beta_1 = 1e-4 is the smallest step: the update stays within O(beta) of xt
    std::vector<int> t1{1, 1};
    Tensor<double> eps = Tensor<double>::zeros({2, 2});
    fill_normal(eps, rng);
    Tensor<double> m1 = mean_from_eps(xt, std::span<const int>(t1), eps, s);
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(m1.data[k] - xt.data[k]) < 0.05);
}

TEST_CASE("sigma_from_v interpolates between beta_tilde and beta") {
    NoiseSchedule s = NoiseSchedule::linear(100);
    std::vector<int> ts{2, 50, 100};
    Tensor<double> hi = Tensor<double>::full({3, 1}, 40.0);   // v -> 1
    Tensor<double> lo = Tensor<double>::full({3, 1}, -40.0);  // v -> 0
    Tensor<double> mid = Tensor<double>::zeros({3, 1});       // v = 1/2
    Tensor<double> vh = sigma_from_v(hi, std::span<const int>(ts), s);
    Tensor<double> vl = sigma_from_v(lo, std::span<const int>(ts), s);
    Tensor<double> vm = sigma_from_v(mid, std::span<const int>(ts), s);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(vh.data[i] == doctest::Approx(s.beta[ts[i]]).epsilon(1e-12));
        CHECK(vl.data[i] == doctest::Approx(s.beta_tilde[ts[i]]).epsilon(1e-12));
        CHECK(vm.data[i] == doctest::Approx(std::sqrt(s.beta[ts[i]] * s.beta_tilde[ts[i]])).epsilon(1e-12));
    }
    // t = 1: the floor keeps the interpolation finite
    std::vector<int> t1{1};
    Tensor<double> v1 = sigma_from_v(Tensor<double>::zeros({1, 1}), std::span<const int>(t1), s);
    CHECK(v1.data[0] > 0.0);
    CHECK(std::isfinite(v1.data[0]));
}

TEST_CASE("gaussian_kl closed forms") {
    auto mk = [](double mu, double var) {
        return GaussianParams<double>{Tensor<double>({1}, {mu}), Tensor<double>({1}, {var})};
    };
    CHECK(gaussian_kl(mk(0.7, 2.0), mk(0.7, 2.0)) == 0.0);
    CHECK(gaussian_kl(mk(0.0, 1.0), mk(1.0, 1.0)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gaussian_kl(mk(0.0, 4.0), mk(0.0, 1.0)) == doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-9));
    CHECK_THROWS_AS(gaussian_kl(mk(0.0, 0.0), mk(0.0, 1.0)), ArgumentError);

    CounterRng rng(3);
    for (int i = 0; i < 200; ++i) {
        auto p = mk(rng.normal(), 0.1 + rng.uniform());
        auto q = mk(rng.normal(), 0.1 + rng.uniform());
        CHECK(gaussian_kl(p, q) >= 0.0);
    }
}

TEST_CASE("hybrid loss contracts") {
    NoiseSchedule s = NoiseSchedule::linear(100);
    CounterRng rng(13);
    const std::size_t B = 4;
    Tensor<float> x0 = Tensor<float>::zeros({B, 2});
    Tensor<float> eps = Tensor<float>::zeros({B, 2});
    fill_normal(x0, rng);
    fill_normal(eps, rng);
    std::vector<int> ts{3, 40, 77, 100};
    Tensor<float> xt = q_sample(x0, std::span<const int>(ts), eps, s);

    ModelOut<float> out;
    out.eps_pred = eps;  // perfect prediction
    out.v_raw = Tensor<float>::zeros({B, 2});
    fill_normal(out.v_raw, rng);

    LossParts perfect = hybrid_loss(out, x0, xt, std::span<const int>(ts), eps, s, 0.001, LossMode::Hybrid);
    CHECK(perfect.simple == 0.0);
    CHECK(perfect.has_vlb);

    fill_normal(out.eps_pred, rng);
    LossParts l0 = hybrid_loss(out, x0, xt, std::span<const int>(ts), eps, s, 0.0, LossMode::Hybrid);
    CHECK(l0.loss == l0.simple);  // lambda = 0 leaves exactly the simple term

    LossParts ls = hybrid_loss(out, x0, xt, std::span<const int>(ts), eps, s, 0.001, LossMode::Simple);
    CHECK_FALSE(ls.has_vlb);
    CHECK(ls.loss == ls.simple);

    CHECK_THROWS_AS(hybrid_loss(out, x0, xt, std::span<const int>(ts), eps, s, -0.1, LossMode::Hybrid),
                    ArgumentError);
}

TEST_CASE("vlb term sends no gradient to the eps head") {
    NoiseSchedule s = NoiseSchedule::linear(50);
    CounterRng rng(17);
    const std::size_t B = 3;
    const Shape dims{B, 2};
    Graph<float> g;
    NodeId eps_pred = g.input("eps_pred", dims, true);
    NodeId v_raw = g.input("v_raw", dims, true);
    NodeId xt = g.input("xt", dims);
    NodeId eps_true = g.input("eps", dims);
    NodeId pm = g.input("post_mean", dims);
    NodeId plv = g.input("post_logvar", dims);
    NodeId lo = g.input("logvar_lo", dims);
    NodeId span = g.input("logvar_span", dims);
    NodeId ca = g.input("coef_a", dims);
    NodeId cc = g.input("coef_c", dims);
    LossNodes nodes =
        build_denoising_loss(g, eps_pred, v_raw, xt, eps_true, pm, plv, lo, span, ca, cc, 0.01f, LossMode::Hybrid, B);

    Tensor<float> x0v = Tensor<float>::zeros(dims), epsv = Tensor<float>::zeros(dims);
    fill_normal(x0v, rng);
    fill_normal(epsv, rng);
    std::vector<int> ts{1, 25, 50};
    Tensor<float> xtv = q_sample(x0v, std::span<const int>(ts), epsv, s);
    LossCoefs<float> coefs = make_loss_coefs<float>(std::span<const int>(ts), dims, s);
    auto [pmv, plvv] = posterior_mean_logvar(x0v, xtv, std::span<const int>(ts), s);
    Tensor<float> ep = Tensor<float>::zeros(dims), vr = Tensor<float>::zeros(dims);
    fill_normal(ep, rng);
    fill_normal(vr, rng);
    Graph<float>::NamedTensors in{{"eps_pred", &ep}, {"v_raw", &vr},          {"xt", &xtv},
                                  {"eps", &epsv},    {"post_mean", &pmv},     {"post_logvar", &plvv},
                                  {"logvar_lo", &coefs.logvar_lo},            {"logvar_span", &coefs.logvar_span},
                                  {"coef_a", &coefs.coef_a},                  {"coef_c", &coefs.coef_c}};
    g.evaluate(in);
    g.backward(nodes.vlb);
    for (float v : g.grad(eps_pred).data) CHECK(v == 0.0f);  // bit-exact zero
    bool any = false;
    for (float v : g.grad(v_raw).data) any = any || v != 0.0f;
    CHECK(any);  // the variance head does learn from the vlb term

    // through the total loss, the eps head sees exactly the simple-term gradient
    g.backward(nodes.loss);
    const std::vector<float> g_total = g.grad(eps_pred).data;
    g.backward(nodes.simple);
    CHECK(g.grad(eps_pred).data == g_total);
}

TEST_CASE("distill loss: self-distillation is exactly zero") {
    NoiseSchedule s = NoiseSchedule::linear(100);
    CounterRng rng(19);
    const std::size_t B = 5;
    Tensor<float> xt = Tensor<float>::zeros({B, 2});
    fill_normal(xt, rng);
    std::vector<int> ts{1, 2, 50, 99, 100};
    ModelOut<float> t_out, s_out;
    t_out.eps_pred = Tensor<float>::zeros({B, 2});
    t_out.v_raw = Tensor<float>::zeros({B, 2});
    fill_normal(t_out.eps_pred, rng);
    fill_normal(t_out.v_raw, rng);
    s_out = t_out;  // bitwise copy

    LossParts l = distill_loss(t_out, s_out, xt, std::span<const int>(ts), s, 0.001, LossMode::Hybrid);
    CHECK(l.loss == 0.0);
    CHECK(l.simple == 0.0);
    CHECK(l.vlb == 0.0);

    LossParts ls = distill_loss(t_out, s_out, xt, std::span<const int>(ts), s, 0.001, LossMode::Simple);
    CHECK_FALSE(ls.has_vlb);
    CHECK(ls.loss == 0.0);

    fill_normal(s_out.eps_pred, rng);
    LossParts ld = distill_loss(t_out, s_out, xt, std::span<const int>(ts), s, 0.001, LossMode::Hybrid);
    CHECK(ld.loss > 0.0);
}

TEST_CASE("respaced timesteps keep endpoints") {
    NoiseSchedule s = NoiseSchedule::linear(1000);
    auto ts = s.respaced_timesteps(50);
    REQUIRE(ts.size() == 50);
    CHECK(ts.front() == 1);
    CHECK(ts.back() == 1000);
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const int stride = ts[i] - ts[i - 1];
        CHECK(stride >= 20);
        CHECK(stride <= 21);
    }
    CHECK_THROWS_AS(s.respaced_timesteps(1001), ArgumentError);
    CHECK_THROWS_AS(s.respaced_timesteps(0), ArgumentError);

    auto full = s.respaced_timesteps(1000);
    for (int t = 1; t <= 1000; ++t) CHECK(full[static_cast<std::size_t>(t - 1)] == t);

    NoiseSchedule sub = s.respaced(1000);
    for (int t = 1; t <= 1000; ++t) {
        CHECK(sub.beta[t] == s.beta[t]);  // bit-identical
        CHECK(sub.alpha_bar[t] == s.alpha_bar[t]);
        CHECK(sub.model_t[t] == t);
    }

    NoiseSchedule s20 = s.respaced(20);
    CHECK(s20.T == 20);
    CHECK(s20.model_horizon == 1000);
    for (int k = 1; k <= 20; ++k) {
        CHECK(s20.beta_tilde[k] <= s20.beta[k]);
        CHECK(s20.alpha_bar[k] == doctest::Approx(s.alpha_bar[s20.model_t[k]]).epsilon(1e-12));
    }
}
