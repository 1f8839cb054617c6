#ifndef REGAUDIT_PIPELINE_HPP
#define REGAUDIT_PIPELINE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "regaudit/greybox.hpp"
#include "regaudit/log_ingest.hpp"
#include "regaudit/oracle.hpp"
#include "regaudit/regret_mc.hpp"
#include "regaudit/serialize.hpp"
#include "regaudit/synthbench.hpp"
#include "regaudit/types.hpp"

namespace regaudit {

struct AuditConfig {
    std::vector<std::string> inputs;
    std::vector<double> delta_grid = {0.2, 0.3, 0.4, 0.5};
    bool include_unconstrained = true;
    std::vector<double> epsilon_grid = {0.6, 0.7, 0.8, 0.9};
    double certification_epsilon = 0.8;
    int draws = 2000;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::string out_dir = "audit_out";

    FitConfig fit;
    int solver_restarts = 16;
    int solver_max_iters = 300;
    bool independent_eta = false;

    // Feasible-set construction. Budget defaults to total realized spend;
    // bounds default to [0, upper_factor * max realized spend per asset].
    std::string budget_source = "realized_spend";  // or "planned_budget"
    std::optional<double> b_tot_override;
    double bound_lower = 0.0;
    double bound_upper_factor = 2.0;
    std::optional<double> bound_upper;  // absolute cap, overrides the factor
    bool anchor_first_epoch = false;

    void validate() const;
};

AuditConfig audit_config_from_json(const Json& j);
Json audit_config_to_json(const AuditConfig& config);

struct LevelReport {
    LevelKey level;
    OracleSolution oracle;
    RegretSummary summary;
    double lift = 0.0;  // percent of realized total return
    std::vector<double> draws;
    int cells_beyond_support = 0;  // oracle spend > s_hi_all
    int cells_left_of_support = 0;
    std::string error;
};

struct ModelDiagnostics {
    std::string asset_id;
    Index epoch = 1;
    std::string kind;
    double s_lo = 0.0, s_hi = 0.0, s_hi_all = 0.0;
    double sigma_res = 0.0;
    double jitter_mean_gp = 0.0, jitter_var_gp = 0.0;
};

struct PairReport {
    std::string portfolio_id;
    std::string horizon_id;
    double realized_total_spend = 0.0;
    double realized_total_return = 0.0;
    std::vector<LevelReport> levels;
    DeltaSelection selection;
    std::vector<ModelDiagnostics> model_diagnostics;
    std::vector<std::string> notes;
    std::string error;       // pair-level failure, levels may be empty
    std::string error_kind;  // "validation" | "numerical"
};

struct AuditResult {
    AuditConfig config;
    std::vector<PairReport> pairs;  // sorted by (portfolio_id, horizon_id)
    std::vector<DetectabilityCell> detectability;

    bool any_pair_failed() const;
};

// Step I-III for every (portfolio, horizon) pair in the inputs, plus the
// aggregate detectability table. Pairs run in parallel (capped by
// REGRET_AUDIT_THREADS); output is ordered and seeded per pair, so results
// do not depend on scheduling.
AuditResult run_audit(const AuditConfig& config);
AuditResult run_audit(const AuditConfig& config, const std::vector<PortfolioLog>& logs);

// report.json, summaries.csv, draws.csv, detectability.csv
void write_audit_outputs(const AuditResult& result, const std::string& out_dir);
// sweep.csv (per-level lift quantiles and certification markers)
void write_sweep_outputs(const AuditResult& result, const std::string& out_dir);

Json audit_report_json(const AuditResult& result);

// --------------------------------------------------------------------------
// Synthetic world generation + benchmark

struct GenConfig {
    WorldConfig world;
    LoggingPolicy::Kind policy_kind = LoggingPolicy::Kind::Uniform;
    double support_lo = 0.5;
    double support_hi = 9.5;
    int obs_per_cell = 20;
    std::string anchor = "none";  // "none" | "equal_split" | "per_asset"
    std::optional<double> anchor_mean;
    std::optional<std::vector<double>> anchor_means_per_asset;
    std::string portfolio_id = "SYN";
    std::string horizon_id = "H1";
    std::vector<double> truth_delta_grid = {0.2, 0.3};
    bool truth_include_unconstrained = true;
    int truth_grid_points = 21;
    std::string out_dir = "world";

    void validate() const;
};

GenConfig gen_config_from_json(const Json& j);

struct GenResult {
    TrueWorld world;
    PortfolioLog log;
    FeasibleSet base_feasible;
    std::map<std::string, double> truth;  // level label -> true regret
};

GenResult run_gen(const GenConfig& config);
// world.json, log.csv, truth.json
void write_gen_outputs(const GenResult& result, const std::string& out_dir);

struct BenchLevel {
    std::string level;
    double true_regret = 0.0;
    double estimated_mean = 0.0;
    double estimated_std = 0.0;
    double abs_error = 0.0;
    double rel_error = 0.0;
    double tolerance = 0.0;
    double extrapolation_fraction = 0.0;
    std::string status;  // "pass" | "fail" | "weak-support"
};

struct BenchResult {
    std::vector<BenchLevel> levels;
    bool passed = false;  // no "fail" level
    AuditResult audit;
};

// Audits a generated log against its truth.json (validating that the pair
// matches) and scores recovery per level: pass when
// |est - true| <= max(0.15 |true|, 0.5 sigma_total).
BenchResult run_bench(const std::string& log_path, const std::string& truth_path,
                      const AuditConfig& overrides);
void write_bench_outputs(const BenchResult& result, const std::string& out_path);

// Feasible set an audit derives from a log (shared by gen/bench so truth and
// estimate optimize over the same polytope).
FeasibleSet derive_feasible_set(const PortfolioLog& log, const AuditConfig& config);

std::uint64_t pair_seed(const AuditConfig& config, const std::string& portfolio_id,
                        const std::string& horizon_id);

}  // namespace regaudit

#endif  // REGAUDIT_PIPELINE_HPP
