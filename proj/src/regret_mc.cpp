#include "regaudit/regret_mc.hpp"

#include <algorithm>
#include <cmath>

#include "regaudit/errors.hpp"
#include "regaudit/rng.hpp"

namespace regaudit {

double sample_counterfactual_return(const ResponseModel& model, double s,
                                    double eps_draw, double eta_draw) {
    return model.predict_mean(s) + std::sqrt(model.predict_epistemic_var(s)) * eta_draw +
           model.predict_outcome_sd(s) * eps_draw;
}

RegretDraws mc_regret(const ModelGrid& models, const Matrix& oracle_spend,
                      const Matrix& realized_spend, int J, std::uint64_t seed,
                      const McOptions& options) {
    const Index E = static_cast<Index>(models.size());
    const Index K = E > 0 ? static_cast<Index>(models.front().size()) : 0;
    if (oracle_spend.rows() != E || oracle_spend.cols() != K ||
        realized_spend.rows() != E || realized_spend.cols() != K)
        throw ShapeMismatch("spend matrices must match the model grid shape");
    if (J < 1) throw TooFewDraws("J must be >= 1");

    // Model evaluations depend only on the two fixed trajectories; cache them
    // per cell so draws are a linear pass.
    struct CellStats {
        double mean, epi_sd, out_sd;
    };
    std::vector<CellStats> at_oracle, at_realized;
    at_oracle.reserve(static_cast<std::size_t>(E * K));
    at_realized.reserve(static_cast<std::size_t>(E * K));
    for (Index e = 0; e < E; ++e) {
        for (Index i = 0; i < K; ++i) {
            const ResponseModel& m =
                models[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)];
            const double so = oracle_spend(e, i), sr = realized_spend(e, i);
            at_oracle.push_back({m.predict_mean(so),
                                 std::sqrt(m.predict_epistemic_var(so)),
                                 m.predict_outcome_sd(so)});
            at_realized.push_back({m.predict_mean(sr),
                                   std::sqrt(m.predict_epistemic_var(sr)),
                                   m.predict_outcome_sd(sr)});
        }
    }

    RegretDraws out;
    out.seed = seed;
    out.draws.resize(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(j));
        double total_oracle = 0.0, total_realized = 0.0;
        for (std::size_t c = 0; c < at_oracle.size(); ++c) {
            const double eps = rng.normal();
            const double eta = rng.normal();
            const double eta_realized = options.independent_eta ? rng.normal() : eta;
            const CellStats& o = at_oracle[c];
            const CellStats& r = at_realized[c];
            total_oracle += o.mean + o.epi_sd * eta + o.out_sd * eps;
            total_realized += r.mean + r.epi_sd * eta_realized + r.out_sd * eps;
        }
        out.draws[static_cast<std::size_t>(j)] = total_oracle - total_realized;
    }
    return out;
}

double empirical_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw TooFewDraws("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - std::floor(h);
    return values[lo] + frac * (values[hi] - values[lo]);
}

RegretSummary summarize(const RegretDraws& draws, double alpha) {
    const std::size_t J = draws.draws.size();
    if (J < 2) throw TooFewDraws("summary needs J >= 2 draws");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidHyper("alpha must lie in (0,1)");

    RegretSummary s;
    s.alpha = alpha;
    double acc = 0.0;
    for (double v : draws.draws) acc += v;
    s.mean = acc / static_cast<double>(J);
    double ss = 0.0;
    std::size_t positive = 0;
    for (double v : draws.draws) {
        ss += (v - s.mean) * (v - s.mean);
        if (v > 0.0) ++positive;
    }
    s.std_dev = std::sqrt(ss / static_cast<double>(J - 1));
    s.prob_improve = static_cast<double>(positive) / static_cast<double>(J);
    s.ci_low = empirical_quantile(draws.draws, alpha / 2.0);
    s.ci_high = empirical_quantile(draws.draws, 1.0 - alpha / 2.0);
    return s;
}

DeltaSelection select_delta(const std::map<double, RegretSummary>& per_level,
                            double epsilon) {
    if (per_level.empty()) throw EmptyLevels("no constraint levels to select from");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidHyper("epsilon must lie in (0,1]");

    DeltaSelection sel;
    sel.epsilon = epsilon;
    sel.per_level = per_level;
    // Ascending map order makes ties resolve toward the smaller delta.
    for (const auto& [delta, summary] : per_level) {
        if (summary.prob_improve < epsilon) continue;
        if (!sel.delta_star || summary.mean > sel.per_level.at(*sel.delta_star).mean) {
            sel.delta_star = delta;
            sel.certified = true;
        }
    }
    return sel;
}

std::vector<DetectabilityCell> detectability_table(
    const std::vector<PairLevelSummaries>& pairs, const std::vector<LevelKey>& levels,
    const std::vector<double>& epsilon_grid) {
    if (pairs.empty()) throw EmptyLevels("detectability table needs at least one pair");

    for (const PairLevelSummaries& pair : pairs)
        for (const LevelKey& level : levels)
            if (!pair.by_level.count(level_label(level)))
                throw MissingCombination("pair (" + pair.portfolio_id + ", " +
                                         pair.horizon_id + ") lacks level " +
                                         level_label(level));

    std::vector<DetectabilityCell> cells;
    cells.reserve(levels.size() * epsilon_grid.size());
    for (const LevelKey& level : levels) {
        for (double eps : epsilon_grid) {
            DetectabilityCell cell;
            cell.level = level;
            cell.epsilon = eps;
            std::vector<double> lifts;
            for (const PairLevelSummaries& pair : pairs) {
                const RegretSummary& s = pair.by_level.at(level_label(level));
                if (s.prob_improve >= eps)
                    lifts.push_back(lift_percent(s, pair.realized_total_return));
            }
            cell.fraction_detectable =
                static_cast<double>(lifts.size()) / static_cast<double>(pairs.size());
            if (!lifts.empty()) {
                double m = 0.0;
                for (double v : lifts) m += v;
                m /= static_cast<double>(lifts.size());
                double sd = 0.0;
                if (lifts.size() > 1) {
                    for (double v : lifts) sd += (v - m) * (v - m);
                    sd = std::sqrt(sd / static_cast<double>(lifts.size() - 1));
                }
                cell.mean_lift = m;
                cell.std_lift = sd;
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

double lift_percent(const RegretSummary& summary, double realized_total_return) {
    if (realized_total_return == 0.0 || !std::isfinite(realized_total_return))
        throw ZeroBaseline("lift undefined for zero realized return");
    return 100.0 * summary.mean / realized_total_return;
}

}  // namespace regaudit
