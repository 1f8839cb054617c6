#include "regaudit/synthbench.hpp"

#include <algorithm>
#include <cmath>

#include "regaudit/errors.hpp"
#include "regaudit/rng.hpp"

namespace regaudit {

namespace {

constexpr int kDriftGrid = 101;

double curve(double a, double b, double s) { return a * (1.0 - std::exp(-b * s)); }

double sup_gap(double a1, double b1, double a2, double b2, double s_max) {
    double worst = 0.0;
    for (int k = 0; k < kDriftGrid; ++k) {
        const double s = s_max * static_cast<double>(k) / (kDriftGrid - 1);
        worst = std::max(worst, std::abs(curve(a1, b1, s) - curve(a2, b2, s)));
    }
    return worst;
}

}  // namespace

TrueWorld generate_world(const WorldConfig& config) {
    if (config.assets < 1 || config.epochs < 1)
        throw ConfigError("world needs K >= 1 and E >= 1");
    if (!(config.a_max >= config.a_min) || config.a_min < 0.0 ||
        !(config.b_max >= config.b_min) || config.b_min < 0.0)
        throw ConfigError("curve parameter ranges must satisfy 0 <= min <= max");
    if (config.drift_bound < 0.0) throw ConfigError("drift bound must be >= 0");

    const Index E = config.epochs, K = config.assets;
    TrueWorld world;
    world.s_max = config.s_max.size() == K ? config.s_max : Vector::Constant(K, 10.0);
    world.noise = config.noise;
    world.drift_bound = config.drift_bound;
    world.seed = config.seed;
    world.a = Matrix::Zero(E, K);
    world.b = Matrix::Zero(E, K);

    // Draw order: assets outer, epochs inner, a before b.
    for (Index i = 0; i < K; ++i) {
        Rng rng = Rng::substream(config.seed, 0x3035, static_cast<std::uint64_t>(i));
        for (Index e = 0; e < E; ++e) {
            world.a(e, i) = rng.uniform(config.a_min, config.a_max);
            world.b(e, i) = rng.uniform(config.b_min, config.b_max);
        }
    }

    // Bounded drift: blend each epoch toward the previous one with the
    // minimal shrinkage (over a 101-step grid of blend weights) that brings
    // the sup-norm gap within the bound.
    for (Index i = 0; i < K; ++i) {
        for (Index e = 1; e < E; ++e) {
            const double ap = world.a(e - 1, i), bp = world.b(e - 1, i);
            for (int step = 0; step <= 100; ++step) {
                const double lambda = static_cast<double>(step) / 100.0;
                const double ab = (1.0 - lambda) * world.a(e, i) + lambda * ap;
                const double bb = (1.0 - lambda) * world.b(e, i) + lambda * bp;
                if (sup_gap(ab, bb, ap, bp, world.s_max[i]) <= config.drift_bound) {
                    world.a(e, i) = ab;
                    world.b(e, i) = bb;
                    break;
                }
            }
        }
    }
    return world;
}

PortfolioLog simulate_log(const TrueWorld& world, const LoggingPolicy& policy,
                          std::uint64_t seed) {
    const Index E = world.epochs(), K = world.assets();
    if (policy.lo.size() != K || policy.hi.size() != K)
        throw ConfigError("policy support vectors must be per-asset");
    if (policy.obs_per_cell < 1) throw ConfigError("obs_per_cell must be >= 1");
    for (Index i = 0; i < K; ++i)
        if (policy.lo[i] < 0.0 || policy.hi[i] < policy.lo[i] ||
            policy.hi[i] > world.s_max[i] + 1e-9)
            throw ConfigError("policy support must lie within [0, s_max]");
    if (policy.anchor_means &&
        (policy.anchor_means->rows() != E || policy.anchor_means->cols() != K))
        throw ConfigError("anchor_means must be an E x K matrix");

    PortfolioLog log;
    log.portfolio_id = policy.portfolio_id;
    log.horizon_id = policy.horizon_id;
    log.assets.reserve(static_cast<std::size_t>(K));
    for (Index i = 0; i < K; ++i) log.assets.push_back("asset_" + std::to_string(i + 1));
    log.observations.assign(static_cast<std::size_t>(E),
                            std::vector<std::vector<Observation>>(static_cast<std::size_t>(K)));
    log.spend = Matrix::Zero(E, K);
    log.ret = Matrix::Zero(E, K);
    log.budget = Matrix::Zero(E, K);

    const int n = policy.obs_per_cell;
    for (Index e = 0; e < E; ++e) {
        for (Index i = 0; i < K; ++i) {
            Rng rng = Rng::substream(seed, 0x51b0 + static_cast<std::uint64_t>(e),
                                     static_cast<std::uint64_t>(i));
            std::vector<double> spends(static_cast<std::size_t>(n));
            const double lo = policy.lo[i], hi = policy.hi[i];
            for (int k = 0; k < n; ++k) {
                double s;
                if (policy.kind == LoggingPolicy::Kind::Uniform) {
                    s = rng.uniform(lo, hi);
                } else {
                    const double center =
                        policy.centers ? (*policy.centers)[i] : 0.5 * (lo + hi);
                    const double w = policy.concentration_width * (hi - lo);
                    s = std::clamp(rng.uniform(center - w, center + w), lo, hi);
                }
                spends[static_cast<std::size_t>(k)] = s;
            }

            if (policy.anchor_means) {
                // Shift (and if needed shrink) the spread so the cell mean
                // hits the target exactly while spends stay non-negative.
                const double target = (*policy.anchor_means)(e, i);
                double mean = 0.0;
                for (double s : spends) mean += s;
                mean /= static_cast<double>(n);
                double min_off = 0.0;
                for (double& s : spends) {
                    s -= mean;
                    min_off = std::min(min_off, s);
                }
                double f = 1.0;
                if (min_off < 0.0 && target + min_off < 0.0) f = target / (-min_off);
                for (double& s : spends) s = target + f * s;
            }

            auto& cell = log.observations[static_cast<std::size_t>(e)]
                                         [static_cast<std::size_t>(i)];
            double ss = 0.0, sr = 0.0;
            for (int k = 0; k < n; ++k) {
                const double s = spends[static_cast<std::size_t>(k)];
                const double rho =
                    world.mean(e, i, s) + world.noise.sd(s) * rng.normal();
                cell.push_back(Observation{s, s, rho, {}});
                ss += s;
                sr += rho;
            }
            log.spend(e, i) = ss / static_cast<double>(n);
            log.ret(e, i) = sr / static_cast<double>(n);
            log.budget(e, i) = log.spend(e, i);
        }
    }
    return log;
}

double true_regret(const TrueWorld& world, const Matrix& realized_spend,
                   const FeasibleSet& feasible, int grid_points) {
    const Index E = world.epochs(), K = world.assets();
    if (realized_spend.rows() != E || realized_spend.cols() != K)
        throw ShapeMismatch("realized spend shape does not match the world");

    WorldSurface surface(world);
    const double realized_value = surface_objective(surface, realized_spend);

    OracleSolution oracle;
    if (E * K <= 6) {
        oracle = brute_force_oracle(surface, feasible, grid_points);
    } else {
        // Beyond the enumeration guard the true curves are concave, so the
        // projected-gradient solver recovers the feasible optimum.
        SolverConfig cfg;
        cfg.reference = realized_spend;
        cfg.seed = world.seed;
        oracle = solve_oracle(surface, feasible, cfg);
    }
    return oracle.objective - realized_value;
}

}  // namespace regaudit
