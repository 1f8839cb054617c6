#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "regaudit/errors.hpp"
#include "regaudit/pipeline.hpp"

namespace {

using namespace regaudit;

constexpr int kExitOk = 0;
constexpr int kExitBenchFail = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitUsage = 64;

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::vector<std::string> inputs;
    std::string delta_grid;
    std::int64_t seed = -1;
    int draws = -1;
    double eps = -1.0;
};

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return Json::parse(in);
}

AuditConfig resolve_audit_config(const CommonFlags& flags) {
    AuditConfig config;
    if (!flags.config_path.empty())
        config = audit_config_from_json(load_json_file(flags.config_path));
    if (!flags.inputs.empty()) config.inputs = flags.inputs;
    if (!flags.out.empty()) config.out_dir = flags.out;
    if (flags.seed >= 0) config.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.draws >= 0) config.draws = flags.draws;
    if (flags.eps >= 0.0) config.certification_epsilon = flags.eps;
    if (!flags.delta_grid.empty()) {
        config.delta_grid.clear();
        std::stringstream ss(flags.delta_grid);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.empty()) continue;
            config.delta_grid.push_back(std::stod(tok));
        }
        std::sort(config.delta_grid.begin(), config.delta_grid.end());
        config.delta_grid.erase(
            std::unique(config.delta_grid.begin(), config.delta_grid.end()),
            config.delta_grid.end());
    }
    config.validate();
    return config;
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool with_inputs) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--seed", flags.seed, "RNG seed override");
    cmd->add_option("--draws", flags.draws, "Monte Carlo draw count override");
    cmd->add_option("--delta-grid", flags.delta_grid,
                    "comma-separated stability levels, e.g. 0.2,0.3");
    cmd->add_option("--eps", flags.eps, "certification threshold override");
    if (with_inputs)
        cmd->add_option("--input", flags.inputs, "input log CSV (repeatable)");
}

int cmd_audit(const CommonFlags& flags) {
    const AuditConfig config = resolve_audit_config(flags);
    const AuditResult result = run_audit(config);
    write_audit_outputs(result, config.out_dir);
    std::cout << "wrote " << config.out_dir << "/report.json (" << result.pairs.size()
              << " pair(s))\n";
    for (const PairReport& p : result.pairs) {
        if (!p.error.empty())
            std::cerr << "pair (" << p.portfolio_id << ", " << p.horizon_id
                      << ") failed: " << p.error << "\n";
        for (const LevelReport& l : p.levels)
            if (!l.error.empty())
                std::cerr << "pair (" << p.portfolio_id << ", " << p.horizon_id
                          << ") level " << level_label(l.level) << " failed: " << l.error
                          << "\n";
    }
    for (const PairReport& p : result.pairs) {
        if (!p.error.empty() && p.error_kind == "validation") return kExitValidation;
        if (!p.error.empty()) return kExitNumerical;
        for (const LevelReport& l : p.levels)
            if (!l.error.empty()) return kExitNumerical;
    }
    return kExitOk;
}

int cmd_sweep(const CommonFlags& flags) {
    const AuditConfig config = resolve_audit_config(flags);
    const AuditResult result = run_audit(config);
    write_sweep_outputs(result, config.out_dir);
    std::cout << "wrote " << config.out_dir << "/sweep.csv\n";
    return result.any_pair_failed() ? kExitNumerical : kExitOk;
}

int cmd_gen(const std::string& config_path, const std::string& out_override,
            std::int64_t seed_override) {
    if (config_path.empty()) throw ConfigError("gen requires --config");
    Json j = load_json_file(config_path);
    if (seed_override >= 0) j["seed"] = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) j["out_dir"] = out_override;
    const GenConfig config = gen_config_from_json(j);
    const GenResult result = run_gen(config);
    write_gen_outputs(result, config.out_dir);
    std::cout << "wrote " << config.out_dir << "/{world.json, log.csv, truth.json}\n";
    return kExitOk;
}

int cmd_bench(const CommonFlags& flags, const std::string& world_dir,
              std::string log_path, std::string truth_path, std::string out_path) {
    if (!world_dir.empty()) {
        if (log_path.empty()) log_path = world_dir + "/log.csv";
        if (truth_path.empty()) truth_path = world_dir + "/truth.json";
        if (out_path.empty()) out_path = world_dir + "/bench.json";
    }
    if (log_path.empty() || truth_path.empty())
        throw ConfigError("bench requires --world or both --log and --truth");
    if (out_path.empty()) out_path = "bench.json";

    CommonFlags audit_flags = flags;
    audit_flags.out.clear();  // bench writes bench.json, not audit outputs
    AuditConfig overrides = resolve_audit_config(audit_flags);

    const BenchResult result = run_bench(log_path, truth_path, overrides);
    write_bench_outputs(result, out_path);
    for (const BenchLevel& l : result.levels)
        std::cout << "delta " << l.level << ": est " << l.estimated_mean << " vs true "
                  << l.true_regret << " (|err| " << l.abs_error << " <= tol "
                  << l.tolerance << "? " << l.status << ")\n";
    std::cout << (result.passed ? "BENCH PASS" : "BENCH FAIL") << " -> " << out_path
              << "\n";
    return result.passed ? kExitOk : kExitBenchFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hindsight-regret auditor for multi-asset budget allocation logs"};
    app.require_subcommand(1);

    CommonFlags audit_flags, sweep_flags, bench_flags;
    std::string gen_config, gen_out;
    std::int64_t gen_seed = -1;
    std::string bench_world, bench_log, bench_truth, bench_out;

    CLI::App* audit = app.add_subcommand("audit", "run a full regret audit");
    add_common_flags(audit, audit_flags, true);

    CLI::App* sweep = app.add_subcommand("sweep", "emit per-level lift distributions");
    add_common_flags(sweep, sweep_flags, true);

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic benchmark world");
    gen->add_option("--config", gen_config, "world config JSON")->required();
    gen->add_option("--out", gen_out, "output directory override");
    gen->add_option("--seed", gen_seed, "seed override");

    CLI::App* bench = app.add_subcommand("bench", "audit a generated world against truth");
    add_common_flags(bench, bench_flags, false);
    bench->add_option("--world", bench_world, "directory produced by gen");
    bench->add_option("--log", bench_log, "log CSV path");
    bench->add_option("--truth", bench_truth, "truth.json path");
    bench->add_option("--bench-out", bench_out, "bench.json output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // exits 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (audit->parsed()) return cmd_audit(audit_flags);
        if (sweep->parsed()) return cmd_sweep(sweep_flags);
        if (gen->parsed()) return cmd_gen(gen_config, gen_out, gen_seed);
        if (bench->parsed())
            return cmd_bench(bench_flags, bench_world, bench_log, bench_truth, bench_out);
    } catch (const regaudit::ValidationError& ex) {
        std::cerr << "validation error: " << ex.what() << "\n";
        return kExitValidation;
    } catch (const regaudit::Json::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitValidation;
    } catch (const regaudit::NumericalError& ex) {
        std::cerr << "numerical error: " << ex.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
