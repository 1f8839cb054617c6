#ifndef REGAUDIT_LOG_INGEST_HPP
#define REGAUDIT_LOG_INGEST_HPP

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "regaudit/types.hpp"

namespace regaudit {

// One logged observation of an (epoch, asset) cell. Cells may hold several
// observations (replicate rows distinguished by an `obs` sub-index column);
// the audit-level trajectory uses one representative value per cell.
struct Observation {
    double budget = 0.0;
    double spend = 0.0;
    double ret = 0.0;
    std::map<std::string, double> covariates;  // carried, never fitted on

    bool operator==(const Observation&) const = default;
};

// Validated epoch x asset grid for one (portfolio, horizon) pair.
// `spend`, `ret`, `budget` are E x K matrices of per-cell representatives
// (means over the cell's observations); `observations[e][i]` keeps the raw
// replicates for response fitting. Epoch indices are 1-based externally.
struct PortfolioLog {
    std::string portfolio_id;
    std::string horizon_id;
    std::vector<std::string> assets;  // column order = first appearance
    Matrix spend;
    Matrix ret;
    Matrix budget;
    std::vector<std::vector<std::vector<Observation>>> observations;

    Index num_epochs() const { return spend.rows(); }
    Index num_assets() const { return spend.cols(); }

    bool equals(const PortfolioLog& other) const;
};

// Window of observations used to fit one (asset, epoch) response: core-epoch
// points at weight 1 plus neighboring-epoch points at exponentially decayed
// weights.
struct WindowPoint {
    double spend = 0.0;
    double ret = 0.0;
    double weight = 1.0;
    int distance = 0;  // 0 for core points
};

struct AuditWindow {
    Index core_epoch = 1;  // 1-based
    std::vector<WindowPoint> points;
    double s_lo = 0.0;      // min core spend
    double s_hi = 0.0;      // max core spend
    double s_hi_all = 0.0;  // max spend over core + auxiliary points

    std::size_t core_count() const;
};

// CSV header: portfolio_id,horizon_id,epoch,asset_id,budget,spend,return
// An `obs` column, when present, extends the uniqueness key (replicate
// sub-index); any other extra column is parsed as a named covariate.
std::vector<PortfolioLog> parse_log(std::istream& input);
std::vector<PortfolioLog> parse_log_file(const std::string& path);

// Canonical CSV emission (epoch-major, column order, obs sub-index); parsing
// the output reproduces the value exactly.
std::string serialize_log(const PortfolioLog& log);

// Total realized spend over the horizon; this is the budget every oracle
// must redistribute.
double realized_total_budget(const PortfolioLog& log);

// w_t = alpha_aux * exp(-d_t / tau_w) for auxiliary distances d_t >= 0.
std::vector<double> compute_aux_weights(const std::vector<int>& distances,
                                        double alpha_aux, double tau_w);

AuditWindow slice_epoch_window(const PortfolioLog& log, Index asset,
                               Index core_epoch, int radius,
                               double alpha_aux, double tau_w);

}  // namespace regaudit

#endif  // REGAUDIT_LOG_INGEST_HPP
