#include "regaudit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "regaudit/errors.hpp"
#include "regaudit/rng.hpp"

namespace regaudit {

namespace {

// Projection of (prev, cur) onto the cone {prev >= 0,
// (1-d) prev <= cur <= (1+d) prev}.
std::pair<double, double> project_stability_pair(double prev, double cur, double d) {
    const double lo = 1.0 - d;
    const double hi = 1.0 + d;
    if (prev >= 0.0 && cur >= lo * prev && cur <= hi * prev) return {prev, cur};
    const auto onto_ray = [&](double c) {
        const double t = std::max(0.0, (prev + c * cur) / (1.0 + c * c));
        return std::pair<double, double>{t, c * t};
    };
    const auto [u1, v1] = onto_ray(lo);
    const auto [u2, v2] = onto_ray(hi);
    const double d1 = (u1 - prev) * (u1 - prev) + (v1 - cur) * (v1 - cur);
    const double d2 = (u2 - prev) * (u2 - prev) + (v2 - cur) * (v2 - cur);
    return d1 <= d2 ? std::pair<double, double>{u1, v1} : std::pair<double, double>{u2, v2};
}

}  // namespace

void FeasibleSet::validate() const {
    const Index K = lower.size();
    if (upper.size() != K || K < 1) throw InfeasibleSet("bound vectors must be per-asset");
    if (epochs < 1) throw InfeasibleSet("feasible set needs at least one epoch");
    for (Index i = 0; i < K; ++i) {
        if (!(lower[i] >= 0.0) || !(upper[i] >= lower[i]))
            throw InfeasibleSet("asset bounds must satisfy 0 <= lower <= upper (asset " +
                                std::to_string(i) + ")");
    }
    const double lo_total = static_cast<double>(epochs) * lower.sum();
    const double hi_total = static_cast<double>(epochs) * upper.sum();
    const double slack = 1e-9 * std::max(1.0, std::abs(b_tot));
    if (b_tot < lo_total - slack || b_tot > hi_total + slack)
        throw InfeasibleSet("total budget " + std::to_string(b_tot) +
                            " outside feasible range [" + std::to_string(lo_total) + ", " +
                            std::to_string(hi_total) + "]");
    if (delta && !(*delta > 0.0 && *delta < 1.0))
        throw InfeasibleSet("delta must lie in (0,1)");
    if (first_epoch_anchor && first_epoch_anchor->size() != K)
        throw InfeasibleSet("first-epoch anchor must be per-asset");
    if (first_epoch_anchor && delta) {
        for (Index i = 0; i < K; ++i)
            if (cell_lower(0, i) > cell_upper(0, i))
                throw InfeasibleSet("anchored epoch-1 band is empty for asset " +
                                    std::to_string(i));
    }
}

double FeasibleSet::cell_lower(Index epoch, Index asset) const {
    double lo = lower[asset];
    if (epoch == 0 && delta && first_epoch_anchor)
        lo = std::max(lo, (1.0 - *delta) * (*first_epoch_anchor)[asset]);
    return lo;
}

double FeasibleSet::cell_upper(Index epoch, Index asset) const {
    double hi = upper[asset];
    if (epoch == 0 && delta && first_epoch_anchor)
        hi = std::min(hi, (1.0 + *delta) * (*first_epoch_anchor)[asset]);
    return hi;
}

ModelSurface::ModelSurface(const ModelGrid& models) : models_(&models) {
    epochs_ = static_cast<Index>(models.size());
    assets_ = epochs_ > 0 ? static_cast<Index>(models.front().size()) : 0;
    for (const auto& row : models)
        if (static_cast<Index>(row.size()) != assets_)
            throw ShapeMismatch("ragged model grid");
}

double ModelSurface::mean(Index epoch, Index asset, double spend) const {
    return (*models_)[static_cast<std::size_t>(epoch)][static_cast<std::size_t>(asset)]
        .predict_mean(spend);
}

double ModelSurface::slope(Index epoch, Index asset, double spend) const {
    return (*models_)[static_cast<std::size_t>(epoch)][static_cast<std::size_t>(asset)]
        .mean_slope(spend);
}

double surface_objective(const ResponseSurface& surface, const Matrix& spend) {
    if (spend.rows() != surface.epochs() || spend.cols() != surface.assets())
        throw ShapeMismatch("spend matrix shape does not match the model grid");
    double acc = 0.0;
    for (Index e = 0; e < spend.rows(); ++e)
        for (Index i = 0; i < spend.cols(); ++i) acc += surface.mean(e, i, spend(e, i));
    return acc;
}

double plug_in_objective(const ModelGrid& models, const Matrix& spend) {
    ModelSurface surface(models);
    return surface_objective(surface, spend);
}

double feasibility_violation(const Matrix& x, const FeasibleSet& fs) {
    const Index E = x.rows(), K = x.cols();
    double v = 0.0;
    for (Index e = 0; e < E; ++e)
        for (Index i = 0; i < K; ++i) {
            v = std::max(v, fs.cell_lower(e, i) - x(e, i));
            v = std::max(v, x(e, i) - fs.cell_upper(e, i));
        }
    v = std::max(v, std::abs(x.sum() - fs.b_tot) / std::max(1.0, std::abs(fs.b_tot)));
    if (fs.delta) {
        const double d = *fs.delta;
        for (Index i = 0; i < K; ++i)
            for (Index e = 1; e < E; ++e) {
                const double prev = x(e - 1, i), cur = x(e, i);
                const double scale = std::max(1.0, std::abs(prev));
                v = std::max(v, ((1.0 - d) * prev - cur) / scale);
                v = std::max(v, (cur - (1.0 + d) * prev) / scale);
            }
    }
    return v;
}

Matrix project_feasible(const Matrix& point, const FeasibleSet& fs, double tol,
                        int max_iter) {
    fs.validate();
    const Index E = point.rows(), K = point.cols();
    if (E != fs.epochs || K != fs.lower.size())
        throw ShapeMismatch("point shape does not match the feasible set");

    // Constraint families: box, budget hyperplane, then one stability cone
    // per (asset, adjacent epoch pair).
    const std::size_t n_sets = 2 + (fs.delta ? static_cast<std::size_t>(K) *
                                                   static_cast<std::size_t>(E - 1)
                                             : 0);
    std::vector<Matrix> increments(n_sets, Matrix::Zero(E, K));

    Matrix x = point;
    const double cells = static_cast<double>(E * K);
    for (int cycle = 0; cycle < max_iter; ++cycle) {
        std::size_t set_idx = 0;

        // Box bounds.
        {
            Matrix y = x + increments[set_idx];
            Matrix projected(E, K);
            for (Index e = 0; e < E; ++e)
                for (Index i = 0; i < K; ++i)
                    projected(e, i) =
                        std::clamp(y(e, i), fs.cell_lower(e, i), fs.cell_upper(e, i));
            increments[set_idx] = y - projected;
            x = projected;
            ++set_idx;
        }
        // Budget hyperplane.
        {
            Matrix y = x + increments[set_idx];
            const double shift = (fs.b_tot - y.sum()) / cells;
            Matrix projected = y.array() + shift;
            increments[set_idx] = y - projected;
            x = projected;
            ++set_idx;
        }
        // Stability cones.
        if (fs.delta) {
            const double d = *fs.delta;
            for (Index i = 0; i < K; ++i)
                for (Index e = 1; e < E; ++e) {
                    Matrix y = x + increments[set_idx];
                    const auto [pu, pv] =
                        project_stability_pair(y(e - 1, i), y(e, i), d);
                    Matrix projected = y;
                    projected(e - 1, i) = pu;
                    projected(e, i) = pv;
                    increments[set_idx] = y - projected;
                    x = projected;
                    ++set_idx;
                }
        }

        const double viol = feasibility_violation(x, fs);
        if (viol <= tol) return x;
    }
    throw ProjectionDiverged("projection residual " +
                             std::to_string(feasibility_violation(x, fs)) +
                             " above tolerance after " + std::to_string(max_iter) +
                             " cycles (the stability band may be infeasible for "
                             "this budget)");
}

// ---------------------------------------------------------------------------
// Projected gradient ascent + pairwise polish

namespace {

struct AscentResult {
    Matrix x;
    double objective = 0.0;
    long iterations = 0;
};

AscentResult ascend_from(const ResponseSurface& surface, const FeasibleSet& fs,
                         const SolverConfig& cfg, Matrix start) {
    const Index E = start.rows(), K = start.cols();
    const double cells = static_cast<double>(E * K);
    const double step0 =
        fs.b_tot > 0.0 ? 0.1 * fs.b_tot / cells : std::max(1.0, fs.upper.maxCoeff()) * 0.1;

    AscentResult res;
    res.x = project_feasible(start, fs, cfg.proj_tol, cfg.proj_max_iter);
    res.objective = surface_objective(surface, res.x);

    double step = step0;
    int stall = 0;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        ++res.iterations;
        Matrix grad(E, K);
        for (Index e = 0; e < E; ++e)
            for (Index i = 0; i < K; ++i) grad(e, i) = surface.slope(e, i, res.x(e, i));

        bool accepted = false;
        double st = std::min(step0, step * 2.0);
        for (int trial = 0; trial < 30; ++trial) {
            Matrix cand = project_feasible(res.x + st * grad, fs, cfg.proj_tol,
                                           cfg.proj_max_iter);
            const double fc = surface_objective(surface, cand);
            if (fc > res.objective) {
                const double gain = fc - res.objective;
                res.x = std::move(cand);
                res.objective = fc;
                step = st;
                accepted = true;
                stall = gain < cfg.obj_rel_tol * std::max(1.0, std::abs(fc)) ? stall + 1 : 0;
                break;
            }
            st *= 0.5;
        }
        if (!accepted) ++stall;
        if (stall >= cfg.stall_iters) break;
    }

    // Pairwise-exchange polish: move mass between cell pairs at decreasing
    // step sizes while the objective improves and feasibility holds.
    const double stab_d = fs.delta ? *fs.delta : 0.0;
    const auto pair_feasible = [&](const Matrix& x, Index c1, Index c2) {
        for (Index c : {c1, c2}) {
            const Index e = c / K, i = c % K;
            const double v = x(e, i);
            if (v < fs.cell_lower(e, i) || v > fs.cell_upper(e, i)) return false;
            if (fs.delta) {
                if (e > 0) {
                    const double prev = x(e - 1, i);
                    if (v < (1.0 - stab_d) * prev || v > (1.0 + stab_d) * prev) return false;
                }
                if (e + 1 < E) {
                    const double next = x(e + 1, i);
                    if (next < (1.0 - stab_d) * v || next > (1.0 + stab_d) * v) return false;
                }
            }
        }
        return true;
    };

    double h = step0;
    for (int level = 0; level < cfg.polish_levels; ++level, h *= 0.5) {
        for (int sweep = 0; sweep < cfg.polish_sweeps_per_level; ++sweep) {
            bool improved = false;
            for (Index c1 = 0; c1 < E * K; ++c1) {
                for (Index c2 = 0; c2 < E * K; ++c2) {
                    if (c1 == c2) continue;
                    Matrix cand = res.x;
                    cand(c1 / K, c1 % K) += h;
                    cand(c2 / K, c2 % K) -= h;
                    if (!pair_feasible(cand, c1, c2)) continue;
                    const double fc = surface_objective(surface, cand);
                    if (fc > res.objective) {
                        res.x = std::move(cand);
                        res.objective = fc;
                        improved = true;
                    }
                }
            }
            if (!improved) break;
        }
    }
    return res;
}

Matrix uniform_start(const FeasibleSet& fs, Index E, Index K) {
    return Matrix::Constant(E, K, fs.b_tot / static_cast<double>(E * K));
}

}  // namespace

OracleSolution solve_oracle(const ResponseSurface& surface, const FeasibleSet& fs,
                            const SolverConfig& cfg) {
    fs.validate();
    const Index E = surface.epochs(), K = surface.assets();
    if (fs.epochs != E || fs.lower.size() != K)
        throw ShapeMismatch("feasible set shape does not match the model grid");

    Matrix reference = cfg.reference;
    if (reference.size() == 0) reference = uniform_start(fs, E, K);
    if (reference.rows() != E || reference.cols() != K)
        throw ShapeMismatch("reference trajectory shape mismatch");

    std::vector<Matrix> starts;
    starts.push_back(reference);
    starts.push_back(uniform_start(fs, E, K));
    for (int r = static_cast<int>(starts.size()); r < std::max(cfg.restarts, 1); ++r) {
        Rng rng = Rng::substream(cfg.seed, 0x07ac1e, static_cast<std::uint64_t>(r));
        Matrix rnd(E, K);
        for (Index e = 0; e < E; ++e)
            for (Index i = 0; i < K; ++i) {
                const double lo = fs.cell_lower(e, i);
                const double hi = fs.cell_upper(e, i);
                rnd(e, i) = rng.uniform(lo, std::min(hi, lo + 2.0 * (fs.b_tot /
                                                      static_cast<double>(E * K) + 1.0)));
            }
        starts.push_back(std::move(rnd));
    }

    OracleSolution best;
    bool have_best = false;
    long total_iters = 0;
    int best_start = 0;
    for (std::size_t idx = 0; idx < starts.size(); ++idx) {
        AscentResult r = ascend_from(surface, fs, cfg, starts[idx]);
        total_iters += r.iterations;
        const double scale = std::max(1.0, std::abs(r.objective));
        bool take = false;
        if (!have_best || r.objective > best.objective + 1e-12 * scale) {
            take = true;
        } else if (std::abs(r.objective - best.objective) <= 1e-12 * scale) {
            const double d_new = (r.x - reference).norm();
            const double d_old = (best.spend - reference).norm();
            if (d_new < d_old - 1e-15) take = true;
        }
        if (take) {
            best.spend = r.x;
            best.objective = r.objective;
            best_start = static_cast<int>(idx);
            have_best = true;
        }
    }

    best.diagnostics.iterations = total_iters;
    best.diagnostics.restarts_used = static_cast<int>(starts.size());
    best.diagnostics.best_start = best_start;
    best.diagnostics.max_violation = feasibility_violation(best.spend, fs);
    return best;
}

OracleSolution solve_oracle(const ModelGrid& models, const FeasibleSet& fs,
                            const SolverConfig& cfg) {
    ModelSurface surface(models);
    return solve_oracle(surface, fs, cfg);
}

// ---------------------------------------------------------------------------
// Brute-force validation oracle

OracleSolution brute_force_oracle(const ResponseSurface& surface, const FeasibleSet& fs,
                                  int grid_points_per_cell) {
    fs.validate();
    const Index E = surface.epochs(), K = surface.assets();
    const Index cells = E * K;
    if (cells > 6)
        throw TooLarge("brute-force oracle limited to E*K <= 6, got " + std::to_string(cells));
    if (grid_points_per_cell < 2) throw InvalidHyper("grid_points_per_cell must be >= 2");
    if (fs.epochs != E || fs.lower.size() != K)
        throw ShapeMismatch("feasible set shape does not match the model grid");

    const int g = grid_points_per_cell;
    std::vector<std::vector<double>> grid(static_cast<std::size_t>(cells));
    double tol_sum = 0.0;
    for (Index c = 0; c < cells; ++c) {
        const Index e = c / K, i = c % K;
        const double lo = fs.cell_lower(e, i), hi = fs.cell_upper(e, i);
        auto& gv = grid[static_cast<std::size_t>(c)];
        if (hi <= lo) {
            gv.push_back(lo);
        } else {
            for (int k = 0; k < g; ++k)
                gv.push_back(lo + (hi - lo) * static_cast<double>(k) /
                                      static_cast<double>(g - 1));
            tol_sum += 0.5 * (hi - lo) / static_cast<double>(g - 1);
        }
    }

    // Residual min/max sums over cells >= c, for pruning.
    std::vector<double> min_rest(static_cast<std::size_t>(cells) + 1, 0.0);
    std::vector<double> max_rest(static_cast<std::size_t>(cells) + 1, 0.0);
    for (Index c = cells - 1; c >= 0; --c) {
        const auto& gv = grid[static_cast<std::size_t>(c)];
        min_rest[static_cast<std::size_t>(c)] =
            min_rest[static_cast<std::size_t>(c) + 1] + gv.front();
        max_rest[static_cast<std::size_t>(c)] =
            max_rest[static_cast<std::size_t>(c) + 1] + gv.back();
    }

    const double d = fs.delta.value_or(0.0);
    const double eps = 1e-12;
    std::vector<double> assign(static_cast<std::size_t>(cells), 0.0);
    Matrix best_spend;
    double best_obj = -std::numeric_limits<double>::infinity();
    bool found = false;

    // Depth-first over cells in epoch-major order so the previous epoch's
    // value for the same asset is already fixed when stability is checked.
    const std::function<void(Index, double)> recurse = [&](Index c, double partial) {
        if (partial + min_rest[static_cast<std::size_t>(c)] > fs.b_tot + tol_sum) return;
        if (partial + max_rest[static_cast<std::size_t>(c)] < fs.b_tot - tol_sum) return;
        if (c == cells) {
            const double total = partial;
            Matrix spend(E, K);
            for (Index cc = 0; cc < cells; ++cc)
                spend(cc / K, cc % K) = assign[static_cast<std::size_t>(cc)];
            if (total > 0.0) {
                spend *= fs.b_tot / total;
            } else if (fs.b_tot != 0.0) {
                return;  // cannot rescale an all-zero assignment onto a budget
            }
            const double obj = surface_objective(surface, spend);
            if (!found || obj > best_obj) {
                best_obj = obj;
                best_spend = std::move(spend);
                found = true;
            }
            return;
        }
        const Index e = c / K, i = c % K;
        for (double v : grid[static_cast<std::size_t>(c)]) {
            if (fs.delta && e > 0) {
                const double prev = assign[static_cast<std::size_t>((e - 1) * K + i)];
                const double slack = eps * std::max(1.0, std::abs(prev));
                if (v < (1.0 - d) * prev - slack || v > (1.0 + d) * prev + slack) continue;
            }
            assign[static_cast<std::size_t>(c)] = v;
            recurse(c + 1, partial + v);
        }
    };
    recurse(0, 0.0);

    if (!found) throw EmptyFeasibleGrid("no grid point satisfies budget and stability bands");

    OracleSolution out;
    out.spend = best_spend;
    out.objective = best_obj;
    out.diagnostics.max_violation = feasibility_violation(best_spend, fs);
    return out;
}

OracleSolution brute_force_oracle(const ModelGrid& models, const FeasibleSet& fs,
                                  int grid_points_per_cell) {
    ModelSurface surface(models);
    return brute_force_oracle(surface, fs, grid_points_per_cell);
}

// ---------------------------------------------------------------------------
// Sweep

std::string level_label(const LevelKey& level) {
    if (!level) return "unconstrained";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", *level);
    return buf;
}

std::vector<LevelSolution> oracle_sweep(const ResponseSurface& surface,
                                        const FeasibleSet& base,
                                        const std::vector<LevelKey>& levels,
                                        const SolverConfig& cfg) {
    if (levels.empty()) throw EmptyLevels("delta grid must be non-empty");
    for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
        if (!levels[k] && levels[k + 1])
            throw ConfigError("unconstrained level must come after all delta levels");
        if (levels[k] && levels[k + 1] && !(*levels[k] < *levels[k + 1]))
            throw ConfigError("delta grid must be sorted ascending and unique");
    }

    std::vector<LevelSolution> out;
    out.reserve(levels.size());
    for (const LevelKey& level : levels) {
        FeasibleSet fs = base;
        fs.delta = level;
        if (!level) fs.first_epoch_anchor.reset();
        LevelSolution ls;
        ls.level = level;
        try {
            ls.solution = solve_oracle(surface, fs, cfg);
        } catch (const std::exception& ex) {
            ls.error = ex.what();
        }
        out.push_back(std::move(ls));
    }

    // Nested feasibility: a tighter level's solution is feasible at every
    // looser level, so offering it as a warm start makes plug-in objectives
    // non-decreasing across the sweep.
    for (std::size_t k = 1; k < out.size(); ++k) {
        if (!out[k - 1].solution) continue;
        FeasibleSet fs = base;
        fs.delta = levels[k];
        if (!levels[k]) fs.first_epoch_anchor.reset();
        try {
            SolverConfig warm = cfg;
            warm.restarts = 1;
            warm.reference = out[k - 1].solution->spend;
            OracleSolution repaired = solve_oracle(surface, fs, warm);
            if (!out[k].solution || repaired.objective > out[k].solution->objective) {
                repaired.diagnostics.best_start = -1;
                out[k].solution = std::move(repaired);
                out[k].error.clear();
            }
        } catch (const std::exception&) {
            // keep the independent solve's outcome
        }
    }
    return out;
}

std::vector<LevelSolution> oracle_sweep(const ModelGrid& models, const FeasibleSet& base,
                                        const std::vector<LevelKey>& levels,
                                        const SolverConfig& cfg) {
    ModelSurface surface(models);
    return oracle_sweep(surface, base, levels, cfg);
}

}  // namespace regaudit
