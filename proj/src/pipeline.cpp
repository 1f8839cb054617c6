#include "regaudit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "regaudit/errors.hpp"
#include "regaudit/rng.hpp"

namespace regaudit {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t idx = 0) {
    return Rng::substream(base, tag, idx).next_u64();
}

unsigned thread_cap(std::size_t jobs) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("REGRET_AUDIT_THREADS")) {
        const long v = std::atol(env);
        if (v >= 1) hw = std::min<unsigned>(hw, static_cast<unsigned>(v));
    }
    return std::min<unsigned>(hw, static_cast<unsigned>(std::max<std::size_t>(jobs, 1)));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned threads = thread_cap(n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

std::vector<LevelKey> level_list(const AuditConfig& config) {
    std::vector<LevelKey> levels;
    for (double d : config.delta_grid) levels.emplace_back(d);
    if (config.include_unconstrained) levels.emplace_back(std::nullopt);
    return levels;
}

void require_keys(const Json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void AuditConfig::validate() const {
    for (std::size_t k = 0; k < delta_grid.size(); ++k) {
        if (!(delta_grid[k] > 0.0 && delta_grid[k] < 1.0))
            throw ConfigError("delta grid values must lie in (0,1)");
        if (k > 0 && !(delta_grid[k] > delta_grid[k - 1]))
            throw ConfigError("delta grid must be sorted ascending and unique");
    }
    if (delta_grid.empty() && !include_unconstrained)
        throw ConfigError("need at least one constraint level");
    for (double e : epsilon_grid)
        if (!(e > 0.0 && e <= 1.0)) throw ConfigError("epsilon grid values must lie in (0,1]");
    if (!(certification_epsilon > 0.0 && certification_epsilon <= 1.0))
        throw ConfigError("certification epsilon must lie in (0,1]");
    if (draws < 1) throw ConfigError("draws must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (budget_source != "realized_spend" && budget_source != "planned_budget")
        throw ConfigError("budget_source must be 'realized_spend' or 'planned_budget'");
    if (solver_restarts < 1 || solver_max_iters < 1)
        throw ConfigError("solver restarts and max_iters must be >= 1");
    if (bound_lower < 0.0) throw ConfigError("bound_lower must be >= 0");
    if (!(bound_upper_factor > 0.0)) throw ConfigError("bound_upper_factor must be > 0");
    fit.validate();
}

AuditConfig audit_config_from_json(const Json& j) {
    AuditConfig c;
    require_keys(j, {"inputs", "delta_grid", "include_unconstrained", "epsilon_grid",
                     "certification_epsilon", "draws", "alpha", "seed", "out_dir", "fit",
                     "solver", "independent_eta", "budget_source", "b_tot_override",
                     "bound_lower", "bound_upper_factor", "bound_upper",
                     "anchor_first_epoch"},
                 "audit config");
    if (j.contains("inputs")) c.inputs = j.at("inputs").get<std::vector<std::string>>();
    if (j.contains("delta_grid"))
        c.delta_grid = j.at("delta_grid").get<std::vector<double>>();
    if (j.contains("include_unconstrained"))
        c.include_unconstrained = j.at("include_unconstrained").get<bool>();
    if (j.contains("epsilon_grid"))
        c.epsilon_grid = j.at("epsilon_grid").get<std::vector<double>>();
    if (j.contains("certification_epsilon"))
        c.certification_epsilon = j.at("certification_epsilon").get<double>();
    if (j.contains("draws")) c.draws = j.at("draws").get<int>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("independent_eta"))
        c.independent_eta = j.at("independent_eta").get<bool>();
    if (j.contains("budget_source"))
        c.budget_source = j.at("budget_source").get<std::string>();
    if (j.contains("b_tot_override") && !j.at("b_tot_override").is_null())
        c.b_tot_override = j.at("b_tot_override").get<double>();
    if (j.contains("bound_lower")) c.bound_lower = j.at("bound_lower").get<double>();
    if (j.contains("bound_upper_factor"))
        c.bound_upper_factor = j.at("bound_upper_factor").get<double>();
    if (j.contains("bound_upper") && !j.at("bound_upper").is_null())
        c.bound_upper = j.at("bound_upper").get<double>();
    if (j.contains("anchor_first_epoch"))
        c.anchor_first_epoch = j.at("anchor_first_epoch").get<bool>();
    if (j.contains("solver")) {
        const Json& s = j.at("solver");
        require_keys(s, {"restarts", "max_iters"}, "solver config");
        if (s.contains("restarts")) c.solver_restarts = s.at("restarts").get<int>();
        if (s.contains("max_iters")) c.solver_max_iters = s.at("max_iters").get<int>();
    }
    if (j.contains("fit")) {
        const Json& f = j.at("fit");
        require_keys(f, {"alpha_aux", "tau_w", "window_radius", "saturation_restarts",
                         "sigma_min_sq", "noise_floor", "lengthscale_lo_factor",
                         "lengthscale_hi_factor", "kappa_right", "inflation_p", "s_scale"},
                     "fit config");
        if (f.contains("alpha_aux")) c.fit.alpha_aux = f.at("alpha_aux").get<double>();
        if (f.contains("tau_w")) c.fit.tau_w = f.at("tau_w").get<double>();
        if (f.contains("window_radius"))
            c.fit.window_radius = f.at("window_radius").get<int>();
        if (f.contains("saturation_restarts"))
            c.fit.saturation_restarts = f.at("saturation_restarts").get<int>();
        if (f.contains("sigma_min_sq")) c.fit.sigma_min_sq = f.at("sigma_min_sq").get<double>();
        if (f.contains("noise_floor")) c.fit.noise_floor = f.at("noise_floor").get<double>();
        if (f.contains("lengthscale_lo_factor"))
            c.fit.lengthscale_lo_factor = f.at("lengthscale_lo_factor").get<double>();
        if (f.contains("lengthscale_hi_factor"))
            c.fit.lengthscale_hi_factor = f.at("lengthscale_hi_factor").get<double>();
        if (f.contains("kappa_right")) c.fit.kappa_right = f.at("kappa_right").get<double>();
        if (f.contains("inflation_p")) c.fit.inflation_p = f.at("inflation_p").get<double>();
        if (f.contains("s_scale") && !f.at("s_scale").is_null())
            c.fit.s_scale = f.at("s_scale").get<double>();
    }
    c.validate();
    return c;
}

Json audit_config_to_json(const AuditConfig& c) {
    Json j{{"inputs", c.inputs},
           {"delta_grid", c.delta_grid},
           {"include_unconstrained", c.include_unconstrained},
           {"epsilon_grid", c.epsilon_grid},
           {"certification_epsilon", c.certification_epsilon},
           {"draws", c.draws},
           {"alpha", c.alpha},
           {"seed", c.seed},
           {"out_dir", c.out_dir},
           {"independent_eta", c.independent_eta},
           {"budget_source", c.budget_source},
           {"b_tot_override", c.b_tot_override ? Json(*c.b_tot_override) : Json(nullptr)},
           {"bound_lower", c.bound_lower},
           {"bound_upper_factor", c.bound_upper_factor},
           {"bound_upper", c.bound_upper ? Json(*c.bound_upper) : Json(nullptr)},
           {"anchor_first_epoch", c.anchor_first_epoch},
           {"solver", {{"restarts", c.solver_restarts}, {"max_iters", c.solver_max_iters}}},
           {"fit",
            {{"alpha_aux", c.fit.alpha_aux},
             {"tau_w", c.fit.tau_w},
             {"window_radius", c.fit.window_radius},
             {"saturation_restarts", c.fit.saturation_restarts},
             {"sigma_min_sq", c.fit.sigma_min_sq},
             {"noise_floor", c.fit.noise_floor},
             {"lengthscale_lo_factor", c.fit.lengthscale_lo_factor},
             {"lengthscale_hi_factor", c.fit.lengthscale_hi_factor},
             {"kappa_right", c.fit.kappa_right},
             {"inflation_p", c.fit.inflation_p},
             {"s_scale", c.fit.s_scale > 0.0 ? Json(c.fit.s_scale) : Json(nullptr)}}}};
    return j;
}

std::uint64_t pair_seed(const AuditConfig& config, const std::string& portfolio_id,
                        const std::string& horizon_id) {
    const std::uint64_t h = fnv1a(portfolio_id + '\x1f' + horizon_id);
    return Rng::substream(config.seed, h, 0x9a17).next_u64();
}

FeasibleSet derive_feasible_set(const PortfolioLog& log, const AuditConfig& config) {
    const Index E = log.num_epochs(), K = log.num_assets();
    FeasibleSet fs;
    fs.epochs = E;
    if (config.b_tot_override) {
        fs.b_tot = *config.b_tot_override;
    } else if (config.budget_source == "planned_budget") {
        fs.b_tot = log.budget.sum();
    } else {
        fs.b_tot = realized_total_budget(log);
    }
    fs.lower = Vector::Constant(K, config.bound_lower);
    fs.upper = Vector(K);
    for (Index i = 0; i < K; ++i) {
        const double cap = config.bound_upper
                               ? *config.bound_upper
                               : config.bound_upper_factor * log.spend.col(i).maxCoeff();
        fs.upper[i] = std::max(cap, fs.lower[i]);
    }
    if (config.anchor_first_epoch) fs.first_epoch_anchor = log.spend.row(0).transpose();
    return fs;
}

// ---------------------------------------------------------------------------
// Audit core

namespace {

PairReport audit_pair(const PortfolioLog& log, const AuditConfig& config) {
    PairReport report;
    report.portfolio_id = log.portfolio_id;
    report.horizon_id = log.horizon_id;
    report.realized_total_spend = realized_total_budget(log);
    report.realized_total_return = log.ret.sum();

    const Index E = log.num_epochs(), K = log.num_assets();
    const std::uint64_t pseed = pair_seed(config, log.portfolio_id, log.horizon_id);

    // Step I: per-(asset, epoch) response models.
    ModelGrid models(static_cast<std::size_t>(E),
                     std::vector<ResponseModel>(static_cast<std::size_t>(K)));
    for (Index e = 1; e <= E; ++e) {
        for (Index i = 0; i < K; ++i) {
            const AuditWindow window =
                slice_epoch_window(log, i, e, config.fit.window_radius,
                                   config.fit.alpha_aux, config.fit.tau_w);
            FitConfig fc = config.fit;
            fc.seed = derive_seed(pseed, 0xf17, static_cast<std::uint64_t>((e - 1) * K + i));
            try {
                models[static_cast<std::size_t>(e - 1)][static_cast<std::size_t>(i)] =
                    fit_response_model(window, fc, log.assets[static_cast<std::size_t>(i)], e);
            } catch (const std::exception& ex) {
                throw NumericalError("fit failed for (portfolio " + log.portfolio_id +
                                     ", asset " + log.assets[static_cast<std::size_t>(i)] +
                                     ", epoch " + std::to_string(e) + "): " + ex.what());
            }
            const ResponseModel& m =
                models[static_cast<std::size_t>(e - 1)][static_cast<std::size_t>(i)];
            ModelDiagnostics d;
            d.asset_id = m.asset_id;
            d.epoch = e;
            d.kind = m.kind == ModelKind::Constant ? "constant" : "full";
            d.s_lo = m.s_lo;
            d.s_hi = m.s_hi;
            d.s_hi_all = m.s_hi_all;
            d.sigma_res = m.inflation.sigma_res;
            d.jitter_mean_gp = m.mean_gp.jitter();
            d.jitter_var_gp = m.var_gp.jitter();
            report.model_diagnostics.push_back(std::move(d));
            if (report.model_diagnostics.back().jitter_mean_gp > 0.0 ||
                report.model_diagnostics.back().jitter_var_gp > 0.0)
                report.notes.push_back("jitter used for (" + m.asset_id + ", epoch " +
                                       std::to_string(e) + ")");
        }
    }

    // Step II: oracle sweep over the constraint levels.
    const FeasibleSet base = derive_feasible_set(log, config);
    SolverConfig scfg;
    scfg.restarts = config.solver_restarts;
    scfg.max_iters = config.solver_max_iters;
    scfg.reference = log.spend;
    scfg.seed = derive_seed(pseed, 0x50f);
    const std::vector<LevelKey> levels = level_list(config);
    const std::vector<LevelSolution> sweep = oracle_sweep(models, base, levels, scfg);

    // Step III: Monte Carlo regret per level.
    McOptions mc;
    mc.independent_eta = config.independent_eta;
    for (std::size_t li = 0; li < sweep.size(); ++li) {
        LevelReport lr;
        lr.level = sweep[li].level;
        if (!sweep[li].solution) {
            lr.error = sweep[li].error;
            report.levels.push_back(std::move(lr));
            continue;
        }
        lr.oracle = *sweep[li].solution;
        const RegretDraws draws =
            mc_regret(models, lr.oracle.spend, log.spend, config.draws,
                      derive_seed(pseed, 0x111c, static_cast<std::uint64_t>(li)), mc);
        lr.draws = draws.draws;
        lr.summary = summarize(draws, config.alpha);
        if (report.realized_total_return != 0.0) {
            lr.lift = lift_percent(lr.summary, report.realized_total_return);
        } else {
            lr.lift = 0.0;
        }
        for (Index e = 0; e < E; ++e)
            for (Index i = 0; i < K; ++i) {
                const ResponseModel& m =
                    models[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)];
                const double s = lr.oracle.spend(e, i);
                if (s > m.s_hi_all * (1.0 + 1e-12) + 1e-12) ++lr.cells_beyond_support;
                if (s < m.s_lo - 1e-12) ++lr.cells_left_of_support;
            }
        report.levels.push_back(std::move(lr));
    }
    if (report.realized_total_return == 0.0)
        report.notes.push_back("realized total return is zero; lifts reported as 0");

    // Certificate selection over the delta levels only.
    std::map<double, RegretSummary> delta_summaries;
    for (const LevelReport& lr : report.levels)
        if (lr.level && lr.error.empty()) delta_summaries[*lr.level] = lr.summary;
    if (!delta_summaries.empty()) {
        report.selection = select_delta(delta_summaries, config.certification_epsilon);
    } else {
        report.selection.certified = false;
        report.selection.epsilon = config.certification_epsilon;
    }
    return report;
}

}  // namespace

bool AuditResult::any_pair_failed() const {
    for (const PairReport& p : pairs) {
        if (!p.error.empty()) return true;
        for (const LevelReport& l : p.levels)
            if (!l.error.empty()) return true;
    }
    return false;
}

AuditResult run_audit(const AuditConfig& config, const std::vector<PortfolioLog>& logs) {
    config.validate();
    AuditResult result;
    result.config = config;

    std::vector<const PortfolioLog*> ordered;
    ordered.reserve(logs.size());
    for (const PortfolioLog& log : logs) ordered.push_back(&log);
    std::sort(ordered.begin(), ordered.end(), [](const PortfolioLog* a, const PortfolioLog* b) {
        return std::tie(a->portfolio_id, a->horizon_id) <
               std::tie(b->portfolio_id, b->horizon_id);
    });

    result.pairs.resize(ordered.size());
    parallel_for(ordered.size(), [&](std::size_t idx) {
        try {
            result.pairs[idx] = audit_pair(*ordered[idx], config);
        } catch (const ValidationError& ex) {
            result.pairs[idx].portfolio_id = ordered[idx]->portfolio_id;
            result.pairs[idx].horizon_id = ordered[idx]->horizon_id;
            result.pairs[idx].error = ex.what();
            result.pairs[idx].error_kind = "validation";
        } catch (const std::exception& ex) {
            result.pairs[idx].portfolio_id = ordered[idx]->portfolio_id;
            result.pairs[idx].horizon_id = ordered[idx]->horizon_id;
            result.pairs[idx].error = ex.what();
            result.pairs[idx].error_kind = "numerical";
        }
    });

    // Aggregate detectability over pairs with complete levels and a usable
    // lift baseline; failed pairs stay flagged in the report.
    const std::vector<LevelKey> levels = level_list(config);
    std::vector<PairLevelSummaries> table_pairs;
    for (const PairReport& p : result.pairs) {
        if (!p.error.empty() || p.realized_total_return == 0.0) continue;
        bool complete = true;
        PairLevelSummaries pls;
        pls.portfolio_id = p.portfolio_id;
        pls.horizon_id = p.horizon_id;
        pls.realized_total_return = p.realized_total_return;
        for (const LevelReport& l : p.levels) {
            if (!l.error.empty()) {
                complete = false;
                break;
            }
            pls.by_level[level_label(l.level)] = l.summary;
        }
        if (complete) table_pairs.push_back(std::move(pls));
    }
    if (!table_pairs.empty())
        result.detectability =
            detectability_table(table_pairs, levels, config.epsilon_grid);
    return result;
}

AuditResult run_audit(const AuditConfig& config) {
    config.validate();
    if (config.inputs.empty()) throw ConfigError("no input files given");
    std::vector<PortfolioLog> logs;
    std::set<std::pair<std::string, std::string>> seen;
    for (const std::string& path : config.inputs) {
        std::vector<PortfolioLog> batch = parse_log_file(path);
        for (PortfolioLog& log : batch) {
            if (!seen.emplace(log.portfolio_id, log.horizon_id).second)
                throw DuplicateKey("pair (" + log.portfolio_id + ", " + log.horizon_id +
                                   ") appears in more than one input file");
            logs.push_back(std::move(log));
        }
    }
    return run_audit(config, logs);
}

// ---------------------------------------------------------------------------
// Output files

Json audit_report_json(const AuditResult& result) {
    Json pairs = Json::array();
    for (const PairReport& p : result.pairs) {
        Json levels = Json::array();
        for (const LevelReport& l : p.levels) {
            Json jl{{"level", level_label(l.level)},
                    {"delta", l.level ? Json(*l.level) : Json(nullptr)}};
            if (!l.error.empty()) {
                jl["error"] = l.error;
            } else {
                jl["oracle"] = oracle_solution_to_json(l.oracle);
                jl["summary"] = {{"mean", l.summary.mean},
                                 {"std", l.summary.std_dev},
                                 {"ci_low", l.summary.ci_low},
                                 {"ci_high", l.summary.ci_high},
                                 {"prob_improve", l.summary.prob_improve},
                                 {"alpha", l.summary.alpha}};
                jl["lift_percent"] = l.lift;
                jl["cells_beyond_support"] = l.cells_beyond_support;
                jl["cells_left_of_support"] = l.cells_left_of_support;
            }
            levels.push_back(std::move(jl));
        }
        Json diagnostics = Json::array();
        for (const ModelDiagnostics& d : p.model_diagnostics)
            diagnostics.push_back({{"asset_id", d.asset_id},
                                   {"epoch", d.epoch},
                                   {"kind", d.kind},
                                   {"s_lo", d.s_lo},
                                   {"s_hi", d.s_hi},
                                   {"s_hi_all", d.s_hi_all},
                                   {"sigma_res", d.sigma_res},
                                   {"jitter_mean_gp", d.jitter_mean_gp},
                                   {"jitter_var_gp", d.jitter_var_gp}});
        Json jp{{"portfolio_id", p.portfolio_id},
                {"horizon_id", p.horizon_id},
                {"realized_total_spend", p.realized_total_spend},
                {"realized_total_return", p.realized_total_return},
                {"levels", std::move(levels)},
                {"selection",
                 {{"delta_star",
                   p.selection.delta_star ? Json(*p.selection.delta_star) : Json(nullptr)},
                  {"certified", p.selection.certified},
                  {"epsilon", p.selection.epsilon}}},
                {"model_diagnostics", std::move(diagnostics)},
                {"notes", p.notes}};
        if (!p.error.empty()) {
            jp["error"] = p.error;
            jp["error_kind"] = p.error_kind;
        }
        pairs.push_back(std::move(jp));
    }

    Json detect = Json::array();
    for (const DetectabilityCell& c : result.detectability)
        detect.push_back(
            {{"level", level_label(c.level)},
             {"delta", c.level ? Json(*c.level) : Json(nullptr)},
             {"epsilon", c.epsilon},
             {"fraction", c.fraction_detectable},
             {"mean_lift", c.mean_lift ? Json(*c.mean_lift) : Json(nullptr)},
             {"std_lift", c.std_lift ? Json(*c.std_lift) : Json(nullptr)}});

    return Json{{"schema_version", 1},
                {"tool_version", kToolVersion},
                {"seed", result.config.seed},
                {"config", audit_config_to_json(result.config)},
                {"pairs", std::move(pairs)},
                {"detectability", std::move(detect)}};
}

void write_audit_outputs(const AuditResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/report.json", audit_report_json(result).dump(2) + "\n");

    std::string summaries =
        "portfolio,horizon,delta,mean,std,ci_low,ci_high,prob_improve,lift_percent\n";
    std::string draws = "portfolio,horizon,delta,draw_index,regret\n";
    for (const PairReport& p : result.pairs) {
        for (const LevelReport& l : p.levels) {
            if (!l.error.empty()) continue;
            const std::string label = level_label(l.level);
            summaries += p.portfolio_id + "," + p.horizon_id + "," + label + "," +
                         fmt17(l.summary.mean) + "," + fmt17(l.summary.std_dev) + "," +
                         fmt17(l.summary.ci_low) + "," + fmt17(l.summary.ci_high) + "," +
                         fmt17(l.summary.prob_improve) + "," + fmt17(l.lift) + "\n";
            for (std::size_t d = 0; d < l.draws.size(); ++d)
                draws += p.portfolio_id + "," + p.horizon_id + "," + label + "," +
                         std::to_string(d) + "," + fmt17(l.draws[d]) + "\n";
        }
    }
    write_file(out_dir + "/summaries.csv", summaries);
    write_file(out_dir + "/draws.csv", draws);

    std::string detect = "delta,epsilon,fraction,mean_lift,std_lift\n";
    for (const DetectabilityCell& c : result.detectability) {
        detect += level_label(c.level) + "," + fmt17(c.epsilon) + "," +
                  fmt17(c.fraction_detectable) + ",";
        if (c.mean_lift) detect += fmt17(*c.mean_lift);
        detect += ",";
        if (c.std_lift) detect += fmt17(*c.std_lift);
        detect += "\n";
    }
    write_file(out_dir + "/detectability.csv", detect);
}

void write_sweep_outputs(const AuditResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::vector<double> ps = {0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99};
    std::string sweep =
        "portfolio,horizon,delta,mean_lift,p1,p5,p25,p50,p75,p95,p99,certified\n";
    for (const PairReport& p : result.pairs) {
        if (!p.error.empty() || p.realized_total_return == 0.0) continue;
        for (const LevelReport& l : p.levels) {
            if (!l.error.empty()) continue;
            std::vector<double> lifts;
            lifts.reserve(l.draws.size());
            for (double d : l.draws) lifts.push_back(100.0 * d / p.realized_total_return);
            sweep += p.portfolio_id + "," + p.horizon_id + "," + level_label(l.level) +
                     "," + fmt17(l.lift);
            for (double q : ps) sweep += "," + fmt17(empirical_quantile(lifts, q));
            sweep += std::string(",") + (l.summary.prob_improve >= 0.8 ? "1" : "0") + "\n";
        }
    }
    write_file(out_dir + "/sweep.csv", sweep);
}

// ---------------------------------------------------------------------------
// Generation

void GenConfig::validate() const {
    if (world.assets < 1 || world.epochs < 2)
        throw ConfigError("generated worlds need K >= 1 and E >= 2");
    if (!(support_hi > support_lo) || support_lo < 0.0)
        throw ConfigError("policy support must satisfy 0 <= lo < hi");
    if (obs_per_cell < 1) throw ConfigError("obs_per_cell must be >= 1");
    if (anchor != "none" && anchor != "equal_split" && anchor != "per_asset")
        throw ConfigError("anchor must be 'none', 'equal_split' or 'per_asset'");
    if (anchor == "per_asset" &&
        (!anchor_means_per_asset ||
         static_cast<Index>(anchor_means_per_asset->size()) != world.assets))
        throw ConfigError("per_asset anchor needs one anchor mean per asset");
    for (std::size_t k = 0; k < truth_delta_grid.size(); ++k) {
        if (!(truth_delta_grid[k] > 0.0 && truth_delta_grid[k] < 1.0))
            throw ConfigError("truth delta grid values must lie in (0,1)");
        if (k > 0 && !(truth_delta_grid[k] > truth_delta_grid[k - 1]))
            throw ConfigError("truth delta grid must be sorted ascending");
    }
    if (truth_grid_points < 2) throw ConfigError("truth_grid_points must be >= 2");
}

GenConfig gen_config_from_json(const Json& j) {
    GenConfig c;
    require_keys(j, {"assets", "epochs", "a_range", "b_range", "s_max", "drift_bound",
                     "noise", "policy", "portfolio_id", "horizon_id", "truth_delta_grid",
                     "truth_include_unconstrained", "truth_grid_points", "seed", "out_dir"},
                 "gen config");
    if (j.contains("assets")) c.world.assets = j.at("assets").get<Index>();
    if (j.contains("epochs")) c.world.epochs = j.at("epochs").get<Index>();
    if (j.contains("a_range")) {
        c.world.a_min = j.at("a_range").at(0).get<double>();
        c.world.a_max = j.at("a_range").at(1).get<double>();
    }
    if (j.contains("b_range")) {
        c.world.b_min = j.at("b_range").at(0).get<double>();
        c.world.b_max = j.at("b_range").at(1).get<double>();
    }
    if (j.contains("s_max"))
        c.world.s_max = Vector::Constant(c.world.assets, j.at("s_max").get<double>());
    if (j.contains("drift_bound")) c.world.drift_bound = j.at("drift_bound").get<double>();
    if (j.contains("noise")) {
        require_keys(j.at("noise"), {"c0", "c1"}, "noise spec");
        if (j.at("noise").contains("c0")) c.world.noise.c0 = j.at("noise").at("c0").get<double>();
        if (j.at("noise").contains("c1")) c.world.noise.c1 = j.at("noise").at("c1").get<double>();
    }
    if (j.contains("policy")) {
        const Json& p = j.at("policy");
        require_keys(p, {"kind", "support", "obs_per_cell", "anchor", "anchor_mean",
                         "anchor_means"},
                     "policy config");
        if (p.contains("kind")) {
            const std::string kind = p.at("kind").get<std::string>();
            if (kind == "uniform")
                c.policy_kind = LoggingPolicy::Kind::Uniform;
            else if (kind == "concentrated")
                c.policy_kind = LoggingPolicy::Kind::Concentrated;
            else
                throw ConfigError("policy kind must be 'uniform' or 'concentrated'");
        }
        if (p.contains("support")) {
            c.support_lo = p.at("support").at(0).get<double>();
            c.support_hi = p.at("support").at(1).get<double>();
        }
        if (p.contains("obs_per_cell")) c.obs_per_cell = p.at("obs_per_cell").get<int>();
        if (p.contains("anchor")) c.anchor = p.at("anchor").get<std::string>();
        if (p.contains("anchor_mean") && !p.at("anchor_mean").is_null())
            c.anchor_mean = p.at("anchor_mean").get<double>();
        if (p.contains("anchor_means") && !p.at("anchor_means").is_null())
            c.anchor_means_per_asset = p.at("anchor_means").get<std::vector<double>>();
    }
    if (j.contains("portfolio_id")) c.portfolio_id = j.at("portfolio_id").get<std::string>();
    if (j.contains("horizon_id")) c.horizon_id = j.at("horizon_id").get<std::string>();
    if (j.contains("truth_delta_grid"))
        c.truth_delta_grid = j.at("truth_delta_grid").get<std::vector<double>>();
    if (j.contains("truth_include_unconstrained"))
        c.truth_include_unconstrained = j.at("truth_include_unconstrained").get<bool>();
    if (j.contains("truth_grid_points"))
        c.truth_grid_points = j.at("truth_grid_points").get<int>();
    if (j.contains("seed")) c.world.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    c.validate();
    return c;
}

GenResult run_gen(const GenConfig& config) {
    config.validate();
    GenResult result;
    result.world = generate_world(config.world);

    const Index K = config.world.assets;
    LoggingPolicy policy;
    policy.kind = config.policy_kind;
    policy.lo = Vector::Constant(K, config.support_lo);
    policy.hi = Vector::Constant(K, 0.0);
    for (Index i = 0; i < K; ++i)
        policy.hi[i] = std::min(config.support_hi, result.world.s_max[i]);
    policy.obs_per_cell = config.obs_per_cell;
    policy.portfolio_id = config.portfolio_id;
    policy.horizon_id = config.horizon_id;
    if (config.anchor == "equal_split") {
        const double target =
            config.anchor_mean.value_or(0.5 * (config.support_lo + config.support_hi));
        policy.anchor_means = Matrix::Constant(config.world.epochs, K, target);
    } else if (config.anchor == "per_asset") {
        Matrix anchors(config.world.epochs, K);
        for (Index i = 0; i < K; ++i)
            anchors.col(i).setConstant((*config.anchor_means_per_asset)[
                static_cast<std::size_t>(i)]);
        policy.anchor_means = anchors;
    }

    result.log = simulate_log(result.world, policy,
                              derive_seed(config.world.seed, 0x106));

    AuditConfig defaults;
    result.base_feasible = derive_feasible_set(result.log, defaults);

    for (double d : config.truth_delta_grid) {
        FeasibleSet fs = result.base_feasible;
        fs.delta = d;
        result.truth[level_label(d)] =
            true_regret(result.world, result.log.spend, fs, config.truth_grid_points);
    }
    if (config.truth_include_unconstrained) {
        FeasibleSet fs = result.base_feasible;
        fs.delta.reset();
        result.truth[level_label(std::nullopt)] =
            true_regret(result.world, result.log.spend, fs, config.truth_grid_points);
    }
    return result;
}

void write_gen_outputs(const GenResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    Json world{{"schema_version", 1},
               {"epochs", result.world.epochs()},
               {"assets", result.world.assets()},
               {"a", matrix_to_json(result.world.a)},
               {"b", matrix_to_json(result.world.b)},
               {"s_max", vector_to_json(result.world.s_max)},
               {"noise", {{"c0", result.world.noise.c0}, {"c1", result.world.noise.c1}}},
               {"drift_bound", result.world.drift_bound},
               {"seed", result.world.seed}};
    write_file(out_dir + "/world.json", world.dump(2) + "\n");

    const std::string csv = serialize_log(result.log);
    write_file(out_dir + "/log.csv", csv);

    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a(csv)));
    Json truth{{"schema_version", 1},
               {"portfolio_id", result.log.portfolio_id},
               {"horizon_id", result.log.horizon_id},
               {"epochs", result.log.num_epochs()},
               {"assets", result.log.num_assets()},
               {"b_tot", result.base_feasible.b_tot},
               {"bounds_lower", vector_to_json(result.base_feasible.lower)},
               {"bounds_upper", vector_to_json(result.base_feasible.upper)},
               {"realized_spend", matrix_to_json(result.log.spend)},
               {"log_fnv64", std::string(hash)},
               {"true_regret", result.truth}};
    write_file(out_dir + "/truth.json", truth.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Bench

BenchResult run_bench(const std::string& log_path, const std::string& truth_path,
                      const AuditConfig& overrides) {
    const Json truth = Json::parse(read_file(truth_path));
    const std::string raw_log = read_file(log_path);

    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a(raw_log)));
    if (truth.at("log_fnv64").get<std::string>() != hash)
        throw ValidationError("log checksum does not match truth.json (mismatched "
                              "world/log pair)");

    std::istringstream stream(raw_log);
    std::vector<PortfolioLog> logs = parse_log(stream);
    if (logs.size() != 1) throw ValidationError("bench expects a single-pair log");
    const PortfolioLog& log = logs.front();
    if (log.portfolio_id != truth.at("portfolio_id").get<std::string>() ||
        log.horizon_id != truth.at("horizon_id").get<std::string>() ||
        log.num_epochs() != truth.at("epochs").get<Index>() ||
        log.num_assets() != truth.at("assets").get<Index>())
        throw ValidationError("log does not match truth.json (mismatched world/log pair)");

    AuditConfig config = overrides;
    config.inputs = {log_path};
    config.delta_grid.clear();
    bool want_unconstrained = false;
    for (const auto& [label, value] : truth.at("true_regret").items()) {
        (void)value;
        if (label == "unconstrained")
            want_unconstrained = true;
        else
            config.delta_grid.push_back(std::stod(label));
    }
    std::sort(config.delta_grid.begin(), config.delta_grid.end());
    config.include_unconstrained = want_unconstrained;
    config.validate();

    const FeasibleSet derived = derive_feasible_set(log, config);
    const double truth_btot = truth.at("b_tot").get<double>();
    if (std::abs(derived.b_tot - truth_btot) > 1e-9 * std::max(1.0, std::abs(truth_btot)))
        throw ValidationError("derived budget differs from truth.json (mismatched "
                              "world/log pair)");

    BenchResult result;
    result.audit = run_audit(config, logs);
    const PairReport& pair = result.audit.pairs.front();
    if (!pair.error.empty()) throw NumericalError("bench audit failed: " + pair.error);

    const double cells = static_cast<double>(log.num_epochs() * log.num_assets());
    for (const auto& [label, value] : truth.at("true_regret").items()) {
        const double truth_reg = value.get<double>();
        const LevelReport* found = nullptr;
        for (const LevelReport& l : pair.levels)
            if (level_label(l.level) == label) found = &l;
        if (!found || !found->error.empty())
            throw NumericalError("bench level " + label + " missing from audit");

        BenchLevel bl;
        bl.level = label;
        bl.true_regret = truth_reg;
        bl.estimated_mean = found->summary.mean;
        bl.estimated_std = found->summary.std_dev;
        bl.abs_error = std::abs(bl.estimated_mean - truth_reg);
        bl.rel_error = bl.abs_error / std::max(1e-12, std::abs(truth_reg));
        bl.tolerance = std::max(0.15 * std::abs(truth_reg), 0.5 * bl.estimated_std);
        bl.extrapolation_fraction =
            static_cast<double>(found->cells_beyond_support) / cells;
        if (bl.abs_error <= bl.tolerance) {
            bl.status = "pass";
        } else if (bl.extrapolation_fraction >= 0.25) {
            bl.status = "weak-support";
        } else {
            bl.status = "fail";
        }
        result.levels.push_back(std::move(bl));
    }
    result.passed = std::none_of(result.levels.begin(), result.levels.end(),
                                 [](const BenchLevel& l) { return l.status == "fail"; });
    return result;
}

void write_bench_outputs(const BenchResult& result, const std::string& out_path) {
    Json levels = Json::array();
    for (const BenchLevel& l : result.levels)
        levels.push_back({{"level", l.level},
                          {"true_regret", l.true_regret},
                          {"estimated_mean", l.estimated_mean},
                          {"estimated_std", l.estimated_std},
                          {"abs_error", l.abs_error},
                          {"rel_error", l.rel_error},
                          {"tolerance", l.tolerance},
                          {"extrapolation_fraction", l.extrapolation_fraction},
                          {"status", l.status}});
    Json j{{"schema_version", 1}, {"passed", result.passed}, {"levels", std::move(levels)}};
    const std::filesystem::path p(out_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    write_file(out_path, j.dump(2) + "\n");
}

}  // namespace regaudit
