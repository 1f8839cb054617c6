#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "regaudit/errors.hpp"
#include "regaudit/greybox.hpp"
#include "regaudit/rng.hpp"
#include "regaudit/synthbench.hpp"
#include "test_util.hpp"

using namespace regaudit;
using testutil::fit_models;
using testutil::ones;
using testutil::test_fit_config;
using testutil::vec;

namespace {

// Window over explicit points, all core unless a distance is given.
AuditWindow window_from(const std::vector<std::pair<double, double>>& core,
                        const std::vector<std::tuple<double, double, double, int>>& aux = {}) {
    AuditWindow w;
    w.core_epoch = 1;
    for (const auto& [s, r] : core) w.points.push_back(WindowPoint{s, r, 1.0, 0});
    for (const auto& [s, r, wt, d] : aux) w.points.push_back(WindowPoint{s, r, wt, d});
    w.s_lo = std::numeric_limits<double>::infinity();
    w.s_hi = -std::numeric_limits<double>::infinity();
    w.s_hi_all = -std::numeric_limits<double>::infinity();
    for (const WindowPoint& p : w.points) {
        if (p.distance == 0) {
            w.s_lo = std::min(w.s_lo, p.spend);
            w.s_hi = std::max(w.s_hi, p.spend);
        }
        w.s_hi_all = std::max(w.s_hi_all, p.spend);
    }
    return w;
}

}  // namespace

TEST_CASE("fit_saturation recovers noiseless parameters") {
    const double a = 5.0, b = 0.5;
    Vector s(10), y(10);
    for (int i = 0; i < 10; ++i) {
        s[i] = 0.5 * (i + 1);
        y[i] = a * (1.0 - std::exp(-b * s[i]));
    }
    const SaturationParams fit = fit_saturation(s, y, ones(10), 8, 1);
    CHECK(fit.a == doctest::Approx(a).epsilon(1e-4));
    CHECK(std::abs(fit.a - a) < 1e-3);
    CHECK(std::abs(fit.b - b) < 1e-3);
}

TEST_CASE("fit_saturation zero returns convention") {
    const SaturationParams fit =
        fit_saturation(vec({1, 2, 3}), vec({0, 0, 0}), ones(3), 4, 1);
    CHECK(fit.a == 0.0);
    CHECK(fit.b == 0.0);
}

TEST_CASE("fit_saturation degenerate data") {
    CHECK_THROWS_AS(fit_saturation(vec({2, 2, 2}), vec({1, 1.1, 0.9}), ones(3), 4, 1),
                    DegenerateData);
    CHECK_THROWS_AS(fit_saturation(vec({2}), vec({1}), ones(1), 4, 1), DegenerateData);
}

TEST_CASE("fit_saturation is deterministic in the seed and uses weights") {
    Rng rng(3);
    Vector s(12), y(12), w(12);
    for (int i = 0; i < 12; ++i) {
        s[i] = rng.uniform(0.2, 8.0);
        y[i] = 6.0 * (1.0 - std::exp(-0.4 * s[i])) + 0.3 * rng.normal();
        w[i] = i < 6 ? 1.0 : 0.2;
    }
    const SaturationParams f1 = fit_saturation(s, y, w, 8, 99);
    const SaturationParams f2 = fit_saturation(s, y, w, 8, 99);
    CHECK(f1.a == f2.a);
    CHECK(f1.b == f2.b);
}

TEST_CASE("matern52 closed form") {
    const KernelHyper h{2.0, 1.5, 1e-8};
    CHECK(matern52(0.0, h) == 2.0);

    const KernelHyper unit{1.0, 1.0, 1e-8};
    const double expected =
        (1.0 + std::sqrt(5.0) + 5.0 / 3.0) * std::exp(-std::sqrt(5.0));
    CHECK(matern52(1.0, unit) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.52399).epsilon(1e-4));

    CHECK(matern52(1e6 * h.lengthscale, h) < 1e-12 * h.signal_var);
}

TEST_CASE("matern52 derivative matches finite differences") {
    const KernelHyper h{1.7, 2.3, 1e-8};
    for (double r : {0.3, 1.0, 2.5, 6.0}) {
        const double fd = (matern52(r + 1e-6, h) - matern52(r - 1e-6, h)) / 2e-6;
        CHECK(matern52_dr(r, h) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("GP interpolates noiseless targets") {
    Vector s(8), y(8);
    for (int i = 0; i < 8; ++i) {
        s[i] = i + 1.0;
        y[i] = std::sin(0.6 * s[i]);
    }
    const GpPosterior gp = fit_mean_gp(s, y, ones(8), test_fit_config());
    for (int i = 0; i < 8; ++i) CHECK(std::abs(gp.mean(s[i]) - y[i]) < 1e-4);
}

TEST_CASE("GP on zero residuals predicts zero") {
    Vector s = vec({1, 2, 3, 4, 5});
    const GpPosterior gp = fit_mean_gp(s, Vector::Zero(5), ones(5), test_fit_config());
    for (double q : {0.5, 2.2, 4.9, 7.0}) CHECK(std::abs(gp.mean(q)) < 1e-10);
}

TEST_CASE("weights scale per-point noise as noise_var / w") {
    Vector s = vec({2, 2});
    Vector y = vec({1.0, 1.0});
    Vector w = vec({1.0, 0.1});
    const double nv = 0.05;
    const GpPosterior gp =
        GpPosterior::fit(s, y, nv * w.cwiseInverse(), KernelHyper{1.0, 1.0, nv});
    CHECK(gp.noise_variances()[1] ==
          doctest::Approx(10.0 * gp.noise_variances()[0]).epsilon(1e-12));
}

TEST_CASE("posterior mean invariant under joint weight/noise rescaling") {
    Vector s = vec({1, 2, 3, 4});
    Vector y = vec({0.3, -0.1, 0.2, 0.5});
    Vector w = vec({1.0, 0.5, 0.25, 1.0});
    const double nv = 0.02, c = 7.0;
    const KernelHyper h1{0.8, 1.2, nv};
    const KernelHyper h2{0.8, 1.2, c * nv};
    const GpPosterior g1 = GpPosterior::fit(s, y, nv * w.cwiseInverse(), h1);
    const GpPosterior g2 =
        GpPosterior::fit(s, y, (c * nv) * (c * w).cwiseInverse(), h2);
    for (double q : {0.5, 1.5, 2.5, 3.7}) CHECK(g1.mean(q) == doctest::Approx(g2.mean(q)));
}

TEST_CASE("GP posterior variance positive and shrinks near data") {
    Vector s = vec({1, 2, 3, 4, 5});
    Vector y = vec({0.1, 0.3, -0.2, 0.4, 0.0});
    const GpPosterior gp =
        GpPosterior::fit(s, y, Vector::Constant(5, 0.01), KernelHyper{1.0, 1.5, 0.01});
    CHECK(gp.variance(3.0) > 0.0);
    CHECK(gp.variance(30.0) > gp.variance(3.0));
    CHECK(gp.variance(30.0) == doctest::Approx(1.0).epsilon(1e-6));  // prior far away
}

TEST_CASE("variance GP: homoskedastic plateau") {
    const double sd = 0.4;
    Rng rng(6);
    Vector s(40), eps(40);
    for (int i = 0; i < 40; ++i) {
        s[i] = 0.2 * (i + 1);
        eps[i] = sd * rng.normal();
    }
    const GpPosterior vgp = fit_variance_gp(s, eps, ones(40), test_fit_config());
    for (double q : {1.0, 4.0, 7.5}) {
        const double pred = std::exp(vgp.mean(q) + kLogChi2Offset);
        CHECK(pred == doctest::Approx(sd * sd).epsilon(0.5));
    }
}

TEST_CASE("variance GP: floor when residuals vanish") {
    FitConfig fc = test_fit_config();
    fc.sigma_min_sq = 1e-4;
    Vector s = vec({1, 2, 3, 4});
    const GpPosterior vgp = fit_variance_gp(s, Vector::Zero(4), ones(4), fc);
    for (double q : {0.5, 2.0, 3.9})
        CHECK(std::exp(vgp.mean(q) + kLogChi2Offset) == doctest::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("variance GP: growing residuals produce increasing variance") {
    Rng rng(11);
    Vector s(24), eps(24);
    for (int i = 0; i < 24; ++i) {
        s[i] = 0.4 * (i + 1);
        const double sd = 0.05 + 0.12 * s[i];
        eps[i] = sd * rng.normal();
    }
    const GpPosterior vgp = fit_variance_gp(s, eps, ones(24), test_fit_config());
    CHECK(std::exp(vgp.mean(9.0)) > std::exp(vgp.mean(0.8)));
}

TEST_CASE("fit_response_model on synthetic saturation data") {
    const double a = 6.0, b = 0.45, noise = 0.05;
    Rng rng(17);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 24; ++i) {
        const double s = 0.3 + 9.0 * (i / 23.0);
        pts.emplace_back(s, a * (1.0 - std::exp(-b * s)) + noise * rng.normal());
    }
    const ResponseModel model = fit_response_model(window_from(pts), test_fit_config(), "A", 1);
    REQUIRE(model.kind == ModelKind::Full);
    for (double s : {1.0, 3.0, 5.0, 7.0, 9.0}) {
        const double truth = a * (1.0 - std::exp(-b * s));
        CHECK(model.predict_mean(s) == doctest::Approx(truth).epsilon(0.05));
    }
}

TEST_CASE("interpolation property at noiseless training points") {
    const double a = 4.0, b = 0.6;
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 10; ++i) {
        const double s = 0.5 * (i + 1);
        // Smooth deviation on top of the saturation curve.
        pts.emplace_back(s, a * (1.0 - std::exp(-b * s)) + 0.2 * std::sin(s));
    }
    const ResponseModel model = fit_response_model(window_from(pts), test_fit_config(), "A", 1);
    for (const auto& [s, r] : pts) CHECK(std::abs(model.predict_mean(s) - r) < 1e-3);
}

TEST_CASE("predict_mean at zero spend is zero for a zero-residual model") {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 8; ++i) {
        const double s = i + 1.0;
        pts.emplace_back(s, 3.0 * (1.0 - std::exp(-0.5 * s)));
    }
    const ResponseModel model = fit_response_model(window_from(pts), test_fit_config(), "A", 1);
    CHECK(std::abs(model.predict_mean(0.0)) < 1e-6);
}

TEST_CASE("identical observations collapse to the constant model") {
    const ResponseModel model = fit_response_model(
        window_from({{2.0, 1.3}, {2.0, 1.3}, {2.0, 1.3}}), test_fit_config(), "A", 1);
    CHECK(model.kind == ModelKind::Constant);
    for (double s : {0.0, 2.0, 11.0}) CHECK(model.predict_mean(s) == doctest::Approx(1.3));
    CHECK(model.predict_outcome_sd(1.0) > 0.0);
}

TEST_CASE("refit with the same seed is bitwise identical") {
    Rng rng(23);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 15; ++i) {
        const double s = rng.uniform(0.5, 8.0);
        pts.emplace_back(s, 5.0 * (1.0 - std::exp(-0.5 * s)) + 0.2 * rng.normal());
    }
    const AuditWindow w = window_from(pts);
    const ResponseModel m1 = fit_response_model(w, test_fit_config(42), "A", 1);
    const ResponseModel m2 = fit_response_model(w, test_fit_config(42), "A", 1);
    CHECK(m1.saturation.a == m2.saturation.a);
    CHECK(m1.saturation.b == m2.saturation.b);
    CHECK(m1.mean_gp.hyper().lengthscale == m2.mean_gp.hyper().lengthscale);
    for (double s : {0.7, 3.3, 7.9, 12.0})
        CHECK(m1.predict_mean(s) == m2.predict_mean(s));
}

TEST_CASE("monotone extrapolation beyond the core range") {
    Rng rng(31);
    for (int trial = 0; trial < 12; ++trial) {
        std::vector<std::pair<double, double>> pts;
        const double a = rng.uniform(2.0, 9.0), b = rng.uniform(0.1, 0.9);
        const int n = 8 + static_cast<int>(rng.next_u64() % 10);
        for (int i = 0; i < n; ++i) {
            const double s = rng.uniform(0.3, 7.0);
            pts.emplace_back(s, a * (1.0 - std::exp(-b * s)) + 0.4 * rng.normal());
        }
        const ResponseModel m =
            fit_response_model(window_from(pts), test_fit_config(trial), "A", 1);
        if (m.kind == ModelKind::Constant) continue;
        double prev = m.predict_mean(m.s_hi);
        for (int k = 1; k <= 80; ++k) {
            const double s = m.s_hi + 0.1 * k;
            const double cur = m.predict_mean(s);
            CHECK(cur >= prev - 1e-9);
            prev = cur;
        }
    }
}

TEST_CASE("extrapolation never dips below the boundary anchor") {
    // Strongly decreasing tail in the raw GP: anchored projection must clip.
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 12; ++i) {
        const double s = 0.5 * (i + 1);
        pts.emplace_back(s, 2.0 * (1.0 - std::exp(-0.8 * s)) - 0.5 * std::sin(1.5 * s));
    }
    const ResponseModel m = fit_response_model(window_from(pts), test_fit_config(), "A", 1);
    const double at_hi = m.predict_mean(m.s_hi);
    for (double ds : {0.01, 0.1, 0.5, 2.0, 10.0})
        CHECK(m.predict_mean(m.s_hi + ds) >= at_hi - 1e-9);
}

TEST_CASE("epistemic inflation contract") {
    std::vector<std::pair<double, double>> core;
    Rng rng(5);
    for (int i = 0; i < 10; ++i) {
        const double s = 0.5 + 0.6 * i;
        core.emplace_back(s, 4.0 * (1.0 - std::exp(-0.5 * s)) + 0.15 * rng.normal());
    }
    const ResponseModel m = fit_response_model(window_from(core), test_fit_config(), "A", 1);

    SUBCASE("no inflation within the weighted support (exact)") {
        for (double s : {0.0, 1.0, 3.0, m.s_hi_all}) {
            CHECK(m.predict_epistemic_var(s) == m.mean_gp.variance(s));
        }
    }
    SUBCASE("closed form one scale-length beyond the support") {
        const double s = m.s_hi_all + m.inflation.s_scale;
        const double expected = m.mean_gp.variance(s) +
                                m.inflation.sigma_res * m.inflation.sigma_res;
        CHECK(m.predict_epistemic_var(s) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("inflation term is non-decreasing beyond the support") {
        double prev = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double s = m.s_hi_all + 0.2 * k;
            const double term = m.inflation.term(s, m.s_hi_all);
            CHECK(term >= prev);
            prev = term;
        }
    }
    SUBCASE("epistemic variance always dominates the GP variance") {
        for (double s = 0.0; s < 20.0; s += 0.5)
            CHECK(m.predict_epistemic_var(s) >= m.mean_gp.variance(s));
    }
}

TEST_CASE("outcome sd floor and positivity") {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 8; ++i) {
        const double s = i + 1.0;
        pts.emplace_back(s, 2.0 * (1.0 - std::exp(-0.3 * s)));  // noiseless
    }
    FitConfig fc = test_fit_config();
    fc.sigma_min_sq = 4e-4;
    const ResponseModel m = fit_response_model(window_from(pts), fc, "A", 1);
    CHECK(m.predict_outcome_sd(3.0) == doctest::Approx(0.02).epsilon(1e-6));
    for (double s = 0.0; s <= 10.0 * m.s_hi; s += m.s_hi)
        CHECK(m.predict_outcome_sd(s) > 0.0);
}

TEST_CASE("outcome sd tracks homoskedastic noise scale") {
    Rng rng(13);
    std::vector<std::pair<double, double>> pts;
    const double sd_true = 0.3;
    for (int i = 0; i < 40; ++i) {
        const double s = rng.uniform(0.5, 9.0);
        pts.emplace_back(s, 5.0 * (1.0 - std::exp(-0.5 * s)) + sd_true * rng.normal());
    }
    const ResponseModel m = fit_response_model(window_from(pts), test_fit_config(), "A", 1);
    for (double s : {2.0, 5.0, 8.0}) {
        CHECK(m.predict_outcome_sd(s) == doctest::Approx(sd_true).epsilon(0.5));
    }
}

TEST_CASE("saturation slope matches finite differences") {
    const SaturationParams sat{5.0, 0.5};
    for (double s : {0.5, 1.0, 2.5, 4.0, 5.0}) {
        const double h = 1e-5 * std::max(1.0, s);
        const double fd = (sat.value(s + h) - sat.value(s - h)) / (2.0 * h);
        CHECK(sat.slope(s) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("GP posterior-mean slope matches finite differences") {
    Rng rng(37);
    Vector s(10), y(10);
    for (int i = 0; i < 10; ++i) {
        s[i] = 0.7 * (i + 1);
        y[i] = std::sin(0.8 * s[i]) + 0.1 * rng.normal();
    }
    const GpPosterior gp =
        GpPosterior::fit(s, y, Vector::Constant(10, 0.02), KernelHyper{0.7, 2.1, 0.02});
    for (double q : {1.1, 2.9, 4.4, 6.3}) {
        const double fd = (gp.mean(q + 1e-6) - gp.mean(q - 1e-6)) / 2e-6;
        CHECK(gp.mean_slope(q) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("model mean slope matches finite differences inside the core range") {
    Rng rng(41);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 16; ++i) {
        const double s = 0.5 + 0.55 * i;
        pts.emplace_back(s, 7.0 * (1.0 - std::exp(-0.4 * s)) + 0.2 * rng.normal());
    }
    const ResponseModel m = fit_response_model(window_from(pts), test_fit_config(), "A", 1);
    REQUIRE(m.kind == ModelKind::Full);
    for (double q : {1.0, 3.0, 5.0, 7.0}) {
        const double fd = (m.predict_mean(q + 1e-6) - m.predict_mean(q - 1e-6)) / 2e-6;
        CHECK(m.mean_slope(q) == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("auxiliary weights act as noisier observations in the response fit") {
    // Same aux data with lower weight must pull the fit less.
    std::vector<std::pair<double, double>> core;
    for (int i = 0; i < 6; ++i) {
        const double s = 1.0 + i;
        core.emplace_back(s, 3.0 * (1.0 - std::exp(-0.4 * s)));
    }
    const std::vector<std::tuple<double, double, double, int>> aux_strong = {
        {3.5, 9.0, 0.9, 1}};
    const std::vector<std::tuple<double, double, double, int>> aux_weak = {
        {3.5, 9.0, 0.05, 1}};
    const ResponseModel strong =
        fit_response_model(window_from(core, aux_strong), test_fit_config(), "A", 1);
    const ResponseModel weak =
        fit_response_model(window_from(core, aux_weak), test_fit_config(), "A", 1);
    const double truth = 3.0 * (1.0 - std::exp(-0.4 * 3.5));
    CHECK(std::abs(weak.predict_mean(3.5) - truth) <=
          std::abs(strong.predict_mean(3.5) - truth) + 1e-9);
}
