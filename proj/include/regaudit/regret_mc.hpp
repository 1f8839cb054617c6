#ifndef REGAUDIT_REGRET_MC_HPP
#define REGAUDIT_REGRET_MC_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "regaudit/oracle.hpp"
#include "regaudit/types.hpp"

namespace regaudit {

struct RegretDraws {
    LevelKey level;  // delta value, or nullopt for unconstrained
    std::vector<double> draws;
    std::uint64_t seed = 0;

    std::size_t count() const { return draws.size(); }
};

struct RegretSummary {
    double mean = 0.0;
    double std_dev = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double prob_improve = 0.0;  // P(Reg > 0), strict
    double alpha = 0.05;
};

struct DeltaSelection {
    std::optional<double> delta_star;
    bool certified = false;
    double epsilon = 0.8;
    std::map<double, RegretSummary> per_level;
};

struct DetectabilityCell {
    LevelKey level;
    double epsilon = 0.0;
    double fraction_detectable = 0.0;
    std::optional<double> mean_lift;  // absent when no pair is detectable
    std::optional<double> std_lift;
};

// One portfolio-horizon pair's per-level summaries, input to the
// detectability table.
struct PairLevelSummaries {
    std::string portfolio_id;
    std::string horizon_id;
    double realized_total_return = 0.0;
    std::map<std::string, RegretSummary> by_level;  // key = level_label(...)
};

struct McOptions {
    bool independent_eta = false;  // sensitivity mode: decouple the epistemic
                                   // draw between the two trajectories
};

// Counterfactual return at spend s: mean + epi_sd * eta + outcome_sd * eps.
double sample_counterfactual_return(const ResponseModel& model, double s,
                                    double eps_draw, double eta_draw);

// J coupled regret draws: one (eps, eta) pair per cell per draw, applied to
// both trajectories. Draw order is fixed: draws are indexed by substream j,
// cells visited epoch-major then asset-minor, eps drawn before eta.
RegretDraws mc_regret(const ModelGrid& models, const Matrix& oracle_spend,
                      const Matrix& realized_spend, int J, std::uint64_t seed,
                      const McOptions& options = {});

RegretSummary summarize(const RegretDraws& draws, double alpha);

// Eq-style certificate selection: among levels with prob_improve >= epsilon,
// the one with maximal mean regret; ties toward smaller delta.
DeltaSelection select_delta(const std::map<double, RegretSummary>& per_level,
                            double epsilon);

std::vector<DetectabilityCell> detectability_table(
    const std::vector<PairLevelSummaries>& pairs, const std::vector<LevelKey>& levels,
    const std::vector<double>& epsilon_grid);

double lift_percent(const RegretSummary& summary, double realized_total_return);

// Interpolated empirical quantile (linear between order statistics).
double empirical_quantile(std::vector<double> values, double p);

}  // namespace regaudit

#endif  // REGAUDIT_REGRET_MC_HPP
