#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "regaudit/errors.hpp"
#include "regaudit/oracle.hpp"
#include "regaudit/rng.hpp"
#include "regaudit/synthbench.hpp"
#include "test_util.hpp"

using namespace regaudit;
using testutil::fit_models;
using testutil::make_sat_model;
using testutil::test_fit_config;

namespace {

// Near-linear saturation: a*(1 - exp(-b s)) ~ (a b) s for tiny b.
ResponseModel near_linear_model(double slope) {
    return make_sat_model(slope / 1e-7, 1e-7);
}

FeasibleSet simple_set(double b_tot, Index epochs, Index assets, double lo, double hi) {
    FeasibleSet fs;
    fs.b_tot = b_tot;
    fs.epochs = epochs;
    fs.lower = Vector::Constant(assets, lo);
    fs.upper = Vector::Constant(assets, hi);
    return fs;
}

SolverConfig solver_config(const Matrix& reference, std::uint64_t seed = 1) {
    SolverConfig cfg;
    cfg.reference = reference;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("plug_in_objective basics") {
    SUBCASE("all-zero spend on zero-residual models gives zero") {
        ModelGrid models = {{make_sat_model(5.0, 0.5), make_sat_model(3.0, 0.2)}};
        CHECK(plug_in_objective(models, Matrix::Zero(1, 2)) == 0.0);
    }
    SUBCASE("single cell closed form") {
        ModelGrid models = {{make_sat_model(10.0, 1.0)}};
        Matrix spend(1, 1);
        spend << 1.0;
        CHECK(plug_in_objective(models, spend) ==
              doctest::Approx(10.0 * (1.0 - std::exp(-1.0))).epsilon(1e-12));
    }
    SUBCASE("objective is additive over cells") {
        ModelGrid models = {{make_sat_model(10.0, 1.0), make_sat_model(4.0, 0.3)},
                            {make_sat_model(2.0, 0.8), make_sat_model(7.0, 0.1)}};
        Matrix sa = Matrix::Zero(2, 2), sb = Matrix::Zero(2, 2);
        sa(0, 0) = 2.0;
        sa(1, 1) = 3.0;
        sb(0, 1) = 1.0;
        sb(1, 0) = 4.0;
        CHECK(plug_in_objective(models, sa + sb) ==
              doctest::Approx(plug_in_objective(models, sa) +
                              plug_in_objective(models, sb))
                  .epsilon(1e-12));
    }
    SUBCASE("shape mismatch") {
        ModelGrid models = {{make_sat_model(1.0, 1.0)}};
        CHECK_THROWS_AS(plug_in_objective(models, Matrix::Zero(2, 2)), ShapeMismatch);
    }
}

TEST_CASE("project_feasible") {
    SUBCASE("feasible input is returned unchanged") {
        FeasibleSet fs = simple_set(10.0, 2, 2, 0.0, 10.0);
        Matrix x(2, 2);
        x << 2, 3, 1, 4;
        const Matrix p = project_feasible(x, fs);
        CHECK((p - x).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("simplex projection (8,8) -> (5,5)") {
        FeasibleSet fs = simple_set(10.0, 1, 2, 0.0, 10.0);
        Matrix x(1, 2);
        x << 8, 8;
        const Matrix p = project_feasible(x, fs);
        CHECK(p(0, 0) == doctest::Approx(5.0).epsilon(1e-9));
        CHECK(p(0, 1) == doctest::Approx(5.0).epsilon(1e-9));
    }
    SUBCASE("stability band is enforced") {
        FeasibleSet fs = simple_set(21.0, 2, 1, 0.0, 30.0);
        fs.delta = 0.1;
        Matrix x(2, 1);
        x << 10, 20;
        const Matrix p = project_feasible(x, fs, 1e-11, 100000);
        CHECK(p.sum() == doctest::Approx(21.0).epsilon(1e-9));
        CHECK(p(1, 0) <= 1.1 * p(0, 0) + 1e-9 * std::max(1.0, p(0, 0)));
        CHECK(p(1, 0) >= 0.9 * p(0, 0) - 1e-9 * std::max(1.0, p(0, 0)));
    }
    SUBCASE("infeasible certificate is rejected") {
        FeasibleSet fs = simple_set(100.0, 1, 2, 0.0, 10.0);  // max total is 20
        Matrix x(1, 2);
        x << 5, 5;
        CHECK_THROWS_AS(project_feasible(x, fs), InfeasibleSet);
    }
    SUBCASE("first-epoch anchor narrows epoch one only") {
        FeasibleSet fs = simple_set(20.0, 2, 1, 0.0, 30.0);
        fs.delta = 0.5;
        fs.first_epoch_anchor = Vector::Constant(1, 10.0);
        CHECK(fs.cell_lower(0, 0) == doctest::Approx(5.0));
        CHECK(fs.cell_upper(0, 0) == doctest::Approx(15.0));
        CHECK(fs.cell_lower(1, 0) == 0.0);
        CHECK(fs.cell_upper(1, 0) == 30.0);
    }
    SUBCASE("anchored band conflicting with the box is rejected") {
        FeasibleSet fs = simple_set(4.0, 2, 1, 0.0, 3.0);
        fs.delta = 0.1;
        fs.first_epoch_anchor = Vector::Constant(1, 10.0);  // band [9, 11] vs box [0, 3]
        Matrix x(2, 1);
        x << 2, 2;
        CHECK_THROWS_AS(project_feasible(x, fs), InfeasibleSet);
    }
}

TEST_CASE("solve_oracle on dominance and symmetry fixtures") {
    SUBCASE("linear dominance sends the whole budget to the steeper asset") {
        ModelGrid models = {{near_linear_model(2.0), near_linear_model(1.0)}};
        FeasibleSet fs = simple_set(10.0, 1, 2, 0.0, 10.0);
        Matrix realized(1, 2);
        realized << 5, 5;
        const OracleSolution sol = solve_oracle(models, fs, solver_config(realized));
        CHECK(sol.spend(0, 0) == doctest::Approx(10.0).epsilon(1e-3));
        CHECK(sol.spend(0, 1) == doctest::Approx(0.0).epsilon(1e-3));
        CHECK(sol.objective == doctest::Approx(20.0).epsilon(1e-3));
    }
    SUBCASE("identical concave responses split the budget evenly") {
        ModelGrid models = {{make_sat_model(8.0, 0.5), make_sat_model(8.0, 0.5)}};
        FeasibleSet fs = simple_set(10.0, 1, 2, 0.0, 10.0);
        Matrix realized(1, 2);
        realized << 9, 1;
        const OracleSolution sol = solve_oracle(models, fs, solver_config(realized));
        CHECK(sol.spend(0, 0) == doctest::Approx(5.0).epsilon(1e-3));
        CHECK(sol.spend(0, 1) == doctest::Approx(5.0).epsilon(1e-3));
    }
}

TEST_CASE("brute_force_oracle fixtures and guards") {
    SUBCASE("linear dominance lands on the boundary grid point") {
        ModelGrid models = {{near_linear_model(2.0), near_linear_model(1.0)}};
        FeasibleSet fs = simple_set(10.0, 1, 2, 0.0, 10.0);
        const OracleSolution sol = brute_force_oracle(models, fs, 21);
        CHECK(sol.spend(0, 0) == doctest::Approx(10.0).epsilon(1e-9));
        CHECK(sol.spend(0, 1) == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(sol.objective == doctest::Approx(20.0).epsilon(1e-4));
    }
    SUBCASE("symmetric concave case splits evenly") {
        ModelGrid models = {{make_sat_model(8.0, 0.5), make_sat_model(8.0, 0.5)}};
        FeasibleSet fs = simple_set(10.0, 1, 2, 0.0, 10.0);
        const OracleSolution sol = brute_force_oracle(models, fs, 21);
        CHECK(sol.spend(0, 0) == doctest::Approx(5.0).epsilon(1e-9));
    }
    SUBCASE("enumeration guard") {
        ModelGrid models(4, std::vector<ResponseModel>(2, make_sat_model(1.0, 0.1)));
        FeasibleSet fs = simple_set(8.0, 4, 2, 0.0, 10.0);
        CHECK_THROWS_AS(brute_force_oracle(models, fs, 5), TooLarge);
    }
    SUBCASE("empty feasible grid") {
        ModelGrid models = {{make_sat_model(1.0, 0.1)}, {make_sat_model(1.0, 0.1)}};
        FeasibleSet fs = simple_set(3.0, 2, 1, 0.0, 10.0);
        fs.delta = 0.01;
        CHECK_THROWS_AS(brute_force_oracle(models, fs, 3), EmptyFeasibleGrid);
    }
}

TEST_CASE("solver matches brute force on fitted models") {
    WorldConfig wc;
    wc.assets = 2;
    wc.epochs = 2;
    wc.seed = 404;
    wc.noise.c0 = 0.2;
    const TrueWorld world = generate_world(wc);
    LoggingPolicy policy;
    policy.lo = Vector::Constant(2, 0.5);
    policy.hi = Vector::Constant(2, 9.5);
    policy.obs_per_cell = 12;
    const PortfolioLog log = simulate_log(world, policy, 404);
    const ModelGrid models = fit_models(log, test_fit_config(), 404);

    FeasibleSet fs;
    fs.epochs = 2;
    fs.b_tot = realized_total_budget(log);
    fs.lower = Vector::Constant(2, 0.0);
    fs.upper = 2.0 * log.spend.colwise().maxCoeff().transpose();
    fs.delta = 0.3;

    const OracleSolution pg = solve_oracle(models, fs, solver_config(log.spend, 404));
    const OracleSolution bf = brute_force_oracle(models, fs, 41);
    CHECK(pg.objective >= bf.objective - 1e-3 * std::abs(bf.objective));

    SUBCASE("solution satisfies the feasibility residual bounds") {
        CHECK(std::abs(pg.spend.sum() - fs.b_tot) <= 1e-6 * fs.b_tot);
        for (Index e = 0; e < 2; ++e)
            for (Index i = 0; i < 2; ++i) {
                CHECK(pg.spend(e, i) >= fs.lower[i] - 1e-9);
                CHECK(pg.spend(e, i) <= fs.upper[i] + 1e-9);
            }
        for (Index i = 0; i < 2; ++i) {
            const double prev = pg.spend(0, i);
            const double scale = std::max(1.0, std::abs(prev));
            CHECK(pg.spend(1, i) >= 0.7 * prev - 1e-9 * scale);
            CHECK(pg.spend(1, i) <= 1.3 * prev + 1e-9 * scale);
        }
    }
    SUBCASE("improvement over a feasible realized trajectory") {
        const Matrix projected = project_feasible(log.spend, fs);
        if ((projected - log.spend).cwiseAbs().maxCoeff() < 1e-8) {
            const double realized_obj = plug_in_objective(models, log.spend);
            CHECK(pg.objective >= realized_obj - 1e-9 * std::abs(realized_obj));
        }
    }
    SUBCASE("deterministic given the seed") {
        const OracleSolution again = solve_oracle(models, fs, solver_config(log.spend, 404));
        CHECK(again.objective == pg.objective);
        CHECK((again.spend - pg.spend).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("oracle_sweep") {
    WorldConfig wc;
    wc.assets = 2;
    wc.epochs = 2;
    wc.seed = 777;
    const TrueWorld world = generate_world(wc);
    LoggingPolicy policy;
    policy.lo = Vector::Constant(2, 0.5);
    policy.hi = Vector::Constant(2, 9.5);
    policy.obs_per_cell = 10;
    const PortfolioLog log = simulate_log(world, policy, 777);
    const ModelGrid models = fit_models(log, test_fit_config(), 777);

    FeasibleSet fs;
    fs.epochs = 2;
    fs.b_tot = realized_total_budget(log);
    fs.lower = Vector::Constant(2, 0.0);
    fs.upper = 2.0 * log.spend.colwise().maxCoeff().transpose();

    SUBCASE("objectives are non-decreasing across nested levels") {
        const std::vector<LevelKey> levels = {0.2, 0.5, std::nullopt};
        const auto sweep = oracle_sweep(models, fs, levels, solver_config(log.spend, 7));
        REQUIRE(sweep.size() == 3);
        double prev = -1e300;
        for (const LevelSolution& ls : sweep) {
            REQUIRE(ls.solution.has_value());
            CHECK(ls.solution->objective >=
                  prev - 1e-6 * std::max(1.0, std::abs(prev)));
            prev = ls.solution->objective;
        }
    }
    SUBCASE("singleton unconstrained sweep equals a direct solve") {
        const auto sweep =
            oracle_sweep(models, fs, {std::nullopt}, solver_config(log.spend, 7));
        const OracleSolution direct = [&] {
            FeasibleSet unc = fs;
            unc.delta.reset();
            return solve_oracle(models, unc, solver_config(log.spend, 7));
        }();
        REQUIRE(sweep.size() == 1);
        REQUIRE(sweep[0].solution.has_value());
        CHECK(sweep[0].solution->objective >= direct.objective);
        CHECK(sweep[0].solution->objective ==
              doctest::Approx(direct.objective).epsilon(1e-12));
    }
    SUBCASE("empty grid is an error") {
        CHECK_THROWS_AS(oracle_sweep(models, fs, {}, solver_config(log.spend, 7)),
                        EmptyLevels);
    }
    SUBCASE("unsorted grid is rejected") {
        CHECK_THROWS_AS(
            oracle_sweep(models, fs, {0.5, 0.2}, solver_config(log.spend, 7)),
            ConfigError);
    }
}

TEST_CASE("an empty anchored stability band is a per-level error, not a crash") {
    // Realized epochs move by +54%; anchoring epoch 1 at +/-10% while also
    // chaining epoch 2 leaves no feasible point at delta = 0.1.
    ModelGrid models = {{make_sat_model(6.0, 0.4)}, {make_sat_model(6.0, 0.4)}};
    Matrix realized(2, 1);
    realized << 3.563, 5.470;

    FeasibleSet fs;
    fs.epochs = 2;
    fs.b_tot = realized.sum();
    fs.lower = Vector::Constant(1, 0.0);
    fs.upper = Vector::Constant(1, 12.0);
    fs.first_epoch_anchor = realized.row(0).transpose();

    SolverConfig cfg = solver_config(realized, 45);
    cfg.proj_max_iter = 3000;

    {
        FeasibleSet tight = fs;
        tight.delta = 0.1;
        CHECK_THROWS_AS(solve_oracle(models, tight, cfg), ProjectionDiverged);
    }

    const auto sweep = oracle_sweep(models, fs, {0.1, 0.6}, cfg);
    REQUIRE(sweep.size() == 2);
    CHECK_FALSE(sweep[0].solution.has_value());
    CHECK_FALSE(sweep[0].error.empty());
    REQUIRE(sweep[1].solution.has_value());  // wider band is feasible and solved
}

TEST_CASE("level labels") {
    CHECK(level_label(0.2) == "0.2");
    CHECK(level_label(std::nullopt) == "unconstrained");
}
