#ifndef REGAUDIT_ORACLE_HPP
#define REGAUDIT_ORACLE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "regaudit/greybox.hpp"
#include "regaudit/types.hpp"

namespace regaudit {

// Budget polytope: total-spend equality, per-asset box bounds applied at
// every epoch, optional epoch-to-epoch stability band delta, and an optional
// first-epoch anchor that additionally boxes epoch 1 around given values.
struct FeasibleSet {
    double b_tot = 0.0;
    Vector lower;  // per asset
    Vector upper;  // per asset
    Index epochs = 0;
    std::optional<double> delta;               // absent => unconstrained variant
    std::optional<Vector> first_epoch_anchor;  // realized epoch-1 spends

    void validate() const;  // throws InfeasibleSet on certificate failure
    double cell_lower(Index epoch, Index asset) const;
    double cell_upper(Index epoch, Index asset) const;
};

struct OracleDiagnostics {
    long iterations = 0;
    int restarts_used = 0;
    double max_violation = 0.0;
    int best_start = 0;  // -1 when a sweep repair pass replaced the solution
};

struct OracleSolution {
    Matrix spend;
    double objective = 0.0;
    OracleDiagnostics diagnostics;
};

// Grid of per-cell response curves the optimizer consumes; implemented by
// fitted models and by synthetic ground-truth curves.
class ResponseSurface {
public:
    virtual ~ResponseSurface() = default;
    virtual Index epochs() const = 0;
    virtual Index assets() const = 0;
    virtual double mean(Index epoch, Index asset, double spend) const = 0;
    virtual double slope(Index epoch, Index asset, double spend) const = 0;
};

using ModelGrid = std::vector<std::vector<ResponseModel>>;  // [epoch][asset]

class ModelSurface final : public ResponseSurface {
public:
    explicit ModelSurface(const ModelGrid& models);
    Index epochs() const override { return epochs_; }
    Index assets() const override { return assets_; }
    double mean(Index epoch, Index asset, double spend) const override;
    double slope(Index epoch, Index asset, double spend) const override;

private:
    const ModelGrid* models_;
    Index epochs_ = 0;
    Index assets_ = 0;
};

struct SolverConfig {
    int restarts = 16;
    int max_iters = 300;
    double obj_rel_tol = 1e-9;
    int stall_iters = 5;
    double proj_tol = 1e-10;
    int proj_max_iter = 20000;
    int polish_levels = 14;
    int polish_sweeps_per_level = 4;
    Matrix reference;  // realized trajectory: start point and tie-break target
    std::uint64_t seed = 1;
};

double plug_in_objective(const ModelGrid& models, const Matrix& spend);
double surface_objective(const ResponseSurface& surface, const Matrix& spend);

// Cyclic Dykstra projection onto the polytope. Idempotent on feasible
// points; throws ProjectionDiverged when max_iter cycles leave a violation
// above tol.
Matrix project_feasible(const Matrix& point, const FeasibleSet& feasible,
                        double tol = 1e-10, int max_iter = 20000);

// Worst (relative) constraint violation of a point, for diagnostics.
double feasibility_violation(const Matrix& point, const FeasibleSet& feasible);

// Multi-start projected gradient ascent with a pairwise-exchange polish.
// Deterministic given config.seed.
OracleSolution solve_oracle(const ResponseSurface& surface, const FeasibleSet& feasible,
                            const SolverConfig& config);
OracleSolution solve_oracle(const ModelGrid& models, const FeasibleSet& feasible,
                            const SolverConfig& config);

// Grid-enumeration validation oracle (guarded to E*K <= 6): keeps grid points
// within half a grid cell of the budget and delta-feasible, rescales each
// survivor multiplicatively onto the budget, returns the best.
OracleSolution brute_force_oracle(const ResponseSurface& surface, const FeasibleSet& feasible,
                                  int grid_points_per_cell);
OracleSolution brute_force_oracle(const ModelGrid& models, const FeasibleSet& feasible,
                                  int grid_points_per_cell);

// One constraint level of a sweep: a delta value or the unconstrained case.
using LevelKey = std::optional<double>;
std::string level_label(const LevelKey& level);

struct LevelSolution {
    LevelKey level;
    std::optional<OracleSolution> solution;
    std::string error;  // non-empty when this level failed
};

// Solves every level (deltas ascending, then unconstrained) independently,
// then applies an ascending consistency pass: each level is offered the
// previous level's solution as a warm start, which enforces the nested-
// feasibility monotonicity of the plug-in objective. Per-level errors are
// collected and the sweep continues.
std::vector<LevelSolution> oracle_sweep(const ResponseSurface& surface,
                                        const FeasibleSet& base,
                                        const std::vector<LevelKey>& levels,
                                        const SolverConfig& config);
std::vector<LevelSolution> oracle_sweep(const ModelGrid& models, const FeasibleSet& base,
                                        const std::vector<LevelKey>& levels,
                                        const SolverConfig& config);

}  // namespace regaudit

#endif  // REGAUDIT_ORACLE_HPP
