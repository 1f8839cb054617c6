#ifndef REGAUDIT_SYNTHBENCH_HPP
#define REGAUDIT_SYNTHBENCH_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "regaudit/log_ingest.hpp"
#include "regaudit/oracle.hpp"
#include "regaudit/types.hpp"

namespace regaudit {

// Outcome noise sd as a function of spend: sd(s) = max(0, c0 + c1*s).
struct NoiseSpec {
    double c0 = 0.3;
    double c1 = 0.0;

    double sd(double s) const { return std::max(0.0, c0 + c1 * s); }
};

struct WorldConfig {
    Index assets = 2;
    Index epochs = 2;
    double a_min = 4.0, a_max = 9.0;  // asymptote draw range
    double b_min = 0.2, b_max = 0.6;  // rate draw range
    Vector s_max;                     // per-asset spend domain (defaults to 10)
    double drift_bound = 1.0;         // sup-norm cap between adjacent epochs
    NoiseSpec noise;
    std::uint64_t seed = 1;
};

// Ground-truth world: per-cell saturation curves whose adjacent epochs differ
// by at most drift_bound in sup norm over the spend domain.
struct TrueWorld {
    Matrix a;  // E x K
    Matrix b;
    Vector s_max;
    NoiseSpec noise;
    double drift_bound = 1.0;
    std::uint64_t seed = 1;

    Index epochs() const { return a.rows(); }
    Index assets() const { return a.cols(); }
    double mean(Index e, Index i, double s) const {
        return a(e, i) * (1.0 - std::exp(-b(e, i) * s));
    }
    double slope(Index e, Index i, double s) const {
        return a(e, i) * b(e, i) * std::exp(-b(e, i) * s);
    }
};

class WorldSurface final : public ResponseSurface {
public:
    explicit WorldSurface(const TrueWorld& world) : world_(&world) {}
    Index epochs() const override { return world_->epochs(); }
    Index assets() const override { return world_->assets(); }
    double mean(Index e, Index i, double s) const override { return world_->mean(e, i, s); }
    double slope(Index e, Index i, double s) const override { return world_->slope(e, i, s); }

private:
    const TrueWorld* world_;
};

struct LoggingPolicy {
    enum class Kind { Uniform, Concentrated };

    Kind kind = Kind::Uniform;
    Vector lo, hi;  // per-asset sampling support
    int obs_per_cell = 20;
    double concentration_width = 0.05;   // fraction of support range
    std::optional<Vector> centers;       // Concentrated only; default midpoint
    std::optional<Matrix> anchor_means;  // recenter each cell's spends to an
                                         // exact per-cell mean
    std::string portfolio_id = "SYN";
    std::string horizon_id = "H1";
};

TrueWorld generate_world(const WorldConfig& config);

PortfolioLog simulate_log(const TrueWorld& world, const LoggingPolicy& policy,
                          std::uint64_t seed);

// Ground-truth plug-in regret: best feasible allocation on the TRUE curves
// minus the realized trajectory's true value. Uses the enumeration oracle
// within its E*K <= 6 guard and the (concave-objective) gradient solver
// beyond it.
double true_regret(const TrueWorld& world, const Matrix& realized_spend,
                   const FeasibleSet& feasible, int grid_points);

}  // namespace regaudit

#endif  // REGAUDIT_SYNTHBENCH_HPP
