#include "regaudit/log_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "regaudit/errors.hpp"

namespace regaudit {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

double parse_currency(const std::string& field, const char* column, std::size_t line_no) {
    if (field.empty())
        throw MalformedRow("line " + std::to_string(line_no) + ": empty " + column + " field");
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0')
        throw MalformedRow("line " + std::to_string(line_no) + ": unparseable " + column +
                           " value '" + field + "'");
    if (!std::isfinite(v))
        throw MalformedRow("line " + std::to_string(line_no) + ": non-finite " + column +
                           " value '" + field + "'");
    return v;
}

long parse_integer(const std::string& field, const char* column, std::size_t line_no) {
    if (field.empty())
        throw MalformedRow("line " + std::to_string(line_no) + ": empty " + column + " field");
    char* end = nullptr;
    const long v = std::strtol(field.c_str(), &end, 10);
    if (end == field.c_str() || *end != '\0')
        throw MalformedRow("line " + std::to_string(line_no) + ": unparseable " + column +
                           " value '" + field + "'");
    return v;
}

struct RawRecord {
    long epoch = 0;
    std::string asset;
    long obs_index = 1;
    Observation observation;
    std::size_t line_no = 0;
};

struct PairAccumulator {
    std::string portfolio_id;
    std::string horizon_id;
    std::vector<std::string> assets;                  // first-appearance order
    std::map<std::string, Index> asset_index;
    std::vector<RawRecord> records;
};

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

bool PortfolioLog::equals(const PortfolioLog& other) const {
    return portfolio_id == other.portfolio_id && horizon_id == other.horizon_id &&
           assets == other.assets && spend.rows() == other.spend.rows() &&
           spend.cols() == other.spend.cols() &&
           (spend.array() == other.spend.array()).all() &&
           (ret.array() == other.ret.array()).all() &&
           (budget.array() == other.budget.array()).all() &&
           observations == other.observations;
}

std::size_t AuditWindow::core_count() const {
    std::size_t n = 0;
    for (const auto& p : points)
        if (p.distance == 0) ++n;
    return n;
}

std::vector<PortfolioLog> parse_log(std::istream& input) {
    std::string header_line;
    if (!std::getline(input, header_line))
        throw MalformedRow("empty input: missing CSV header");
    header_line = strip_cr(header_line);
    const std::vector<std::string> header = split_csv_line(header_line);

    const std::vector<std::string> required = {"portfolio_id", "horizon_id", "epoch",
                                               "asset_id",     "budget",     "spend",
                                               "return"};
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (col.count(header[c]))
            throw MalformedRow("duplicate column '" + header[c] + "' in header");
        col[header[c]] = c;
    }
    for (const auto& name : required)
        if (!col.count(name)) throw MalformedRow("missing required column '" + name + "'");

    std::vector<std::pair<std::string, std::size_t>> covariate_cols;
    bool has_obs_col = col.count("obs") > 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string& name = header[c];
        if (std::find(required.begin(), required.end(), name) == required.end() && name != "obs")
            covariate_cols.emplace_back(name, c);
    }

    std::vector<PairAccumulator> pairs;
    std::map<std::pair<std::string, std::string>, std::size_t> pair_index;
    std::set<std::tuple<std::string, std::string, long, std::string, long>> seen_keys;

    std::string line;
    std::size_t line_no = 1;
    while (std::getline(input, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw MalformedRow("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));

        RawRecord rec;
        rec.line_no = line_no;
        const std::string portfolio = fields[col["portfolio_id"]];
        const std::string horizon = fields[col["horizon_id"]];
        if (portfolio.empty() || horizon.empty())
            throw MalformedRow("line " + std::to_string(line_no) + ": empty id field");
        rec.epoch = parse_integer(fields[col["epoch"]], "epoch", line_no);
        if (rec.epoch < 1)
            throw MalformedRow("line " + std::to_string(line_no) + ": epoch must be >= 1, got " +
                               std::to_string(rec.epoch));
        rec.asset = fields[col["asset_id"]];
        if (rec.asset.empty())
            throw MalformedRow("line " + std::to_string(line_no) + ": empty asset_id field");
        rec.observation.budget = parse_currency(fields[col["budget"]], "budget", line_no);
        rec.observation.spend = parse_currency(fields[col["spend"]], "spend", line_no);
        rec.observation.ret = parse_currency(fields[col["return"]], "return", line_no);
        if (rec.observation.spend < 0.0)
            throw NegativeSpend("line " + std::to_string(line_no) + ": negative spend " +
                                format_number(rec.observation.spend));
        if (rec.observation.budget < 0.0)
            throw NegativeSpend("line " + std::to_string(line_no) + ": negative budget " +
                                format_number(rec.observation.budget));
        if (has_obs_col) {
            rec.obs_index = parse_integer(fields[col["obs"]], "obs", line_no);
            if (rec.obs_index < 1)
                throw MalformedRow("line " + std::to_string(line_no) + ": obs must be >= 1");
        }
        for (const auto& [name, c] : covariate_cols) {
            if (fields[c].empty()) continue;
            rec.observation.covariates[name] = parse_currency(fields[c], name.c_str(), line_no);
        }

        const auto key = std::make_tuple(portfolio, horizon, rec.epoch, rec.asset, rec.obs_index);
        if (!seen_keys.insert(key).second)
            throw DuplicateKey("line " + std::to_string(line_no) + ": duplicate record for (" +
                               portfolio + ", " + horizon + ", epoch " +
                               std::to_string(rec.epoch) + ", " + rec.asset + ", obs " +
                               std::to_string(rec.obs_index) + ")");

        const auto pk = std::make_pair(portfolio, horizon);
        auto it = pair_index.find(pk);
        if (it == pair_index.end()) {
            it = pair_index.emplace(pk, pairs.size()).first;
            pairs.push_back(PairAccumulator{portfolio, horizon, {}, {}, {}});
        }
        PairAccumulator& acc = pairs[it->second];
        if (!acc.asset_index.count(rec.asset)) {
            acc.asset_index[rec.asset] = static_cast<Index>(acc.assets.size());
            acc.assets.push_back(rec.asset);
        }
        acc.records.push_back(std::move(rec));
    }

    std::vector<PortfolioLog> logs;
    logs.reserve(pairs.size());
    for (PairAccumulator& acc : pairs) {
        long max_epoch = 0;
        for (const RawRecord& r : acc.records) max_epoch = std::max(max_epoch, r.epoch);
        const Index E = static_cast<Index>(max_epoch);
        const Index K = static_cast<Index>(acc.assets.size());
        if (E < 2)
            throw IncompleteGrid("pair (" + acc.portfolio_id + ", " + acc.horizon_id +
                                 "): at least 2 epochs required, found " + std::to_string(E));

        PortfolioLog log;
        log.portfolio_id = acc.portfolio_id;
        log.horizon_id = acc.horizon_id;
        log.assets = acc.assets;
        log.observations.assign(static_cast<std::size_t>(E),
                                std::vector<std::vector<Observation>>(static_cast<std::size_t>(K)));

        // Observations are ordered by record appearance within each cell
        // (stable across obs sub-indices since files list them in order).
        std::stable_sort(acc.records.begin(), acc.records.end(),
                         [](const RawRecord& a, const RawRecord& b) {
                             return a.obs_index < b.obs_index;
                         });
        for (const RawRecord& r : acc.records) {
            const Index e = static_cast<Index>(r.epoch) - 1;
            const Index i = acc.asset_index.at(r.asset);
            log.observations[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)].push_back(
                r.observation);
        }

        log.spend = Matrix::Zero(E, K);
        log.ret = Matrix::Zero(E, K);
        log.budget = Matrix::Zero(E, K);
        for (Index e = 0; e < E; ++e) {
            for (Index i = 0; i < K; ++i) {
                const auto& cell =
                    log.observations[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)];
                if (cell.empty())
                    throw IncompleteGrid("pair (" + acc.portfolio_id + ", " + acc.horizon_id +
                                         "): missing cell (epoch " + std::to_string(e + 1) +
                                         ", asset " + log.assets[static_cast<std::size_t>(i)] +
                                         ")");
                double sb = 0, ss = 0, sr = 0;
                for (const Observation& o : cell) {
                    sb += o.budget;
                    ss += o.spend;
                    sr += o.ret;
                }
                const double n = static_cast<double>(cell.size());
                log.budget(e, i) = sb / n;
                log.spend(e, i) = ss / n;
                log.ret(e, i) = sr / n;
            }
        }
        logs.push_back(std::move(log));
    }
    return logs;
}

std::vector<PortfolioLog> parse_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input file '" + path + "'");
    return parse_log(in);
}

std::string serialize_log(const PortfolioLog& log) {
    // Union of covariate names, sorted, as trailing columns.
    std::set<std::string> cov_names;
    for (const auto& epoch_row : log.observations)
        for (const auto& cell : epoch_row)
            for (const Observation& o : cell)
                for (const auto& [name, _] : o.covariates) cov_names.insert(name);

    std::string out = "portfolio_id,horizon_id,epoch,asset_id,budget,spend,return,obs";
    for (const auto& name : cov_names) out += "," + name;
    out += "\n";

    for (Index e = 0; e < log.num_epochs(); ++e) {
        for (Index i = 0; i < log.num_assets(); ++i) {
            const auto& cell =
                log.observations[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < cell.size(); ++k) {
                const Observation& o = cell[k];
                out += log.portfolio_id + "," + log.horizon_id + "," + std::to_string(e + 1) +
                       "," + log.assets[static_cast<std::size_t>(i)] + "," +
                       format_number(o.budget) + "," + format_number(o.spend) + "," +
                       format_number(o.ret) + "," + std::to_string(k + 1);
                for (const auto& name : cov_names) {
                    auto it = o.covariates.find(name);
                    out += ",";
                    if (it != o.covariates.end()) out += format_number(it->second);
                }
                out += "\n";
            }
        }
    }
    return out;
}

double realized_total_budget(const PortfolioLog& log) { return log.spend.sum(); }

std::vector<double> compute_aux_weights(const std::vector<int>& distances,
                                        double alpha_aux, double tau_w) {
    if (!(alpha_aux > 0.0 && alpha_aux <= 1.0))
        throw InvalidHyper("alpha_aux must lie in (0,1], got " + format_number(alpha_aux));
    if (!(tau_w > 0.0))
        throw InvalidHyper("tau_w must be > 0, got " + format_number(tau_w));
    std::vector<double> weights;
    weights.reserve(distances.size());
    for (int d : distances) {
        if (d < 0) throw InvalidHyper("auxiliary distance must be >= 0");
        weights.push_back(alpha_aux * std::exp(-static_cast<double>(d) / tau_w));
    }
    return weights;
}

AuditWindow slice_epoch_window(const PortfolioLog& log, Index asset, Index core_epoch,
                               int radius, double alpha_aux, double tau_w) {
    const Index E = log.num_epochs();
    if (core_epoch < 1 || core_epoch > E)
        throw EpochOutOfRange("core epoch " + std::to_string(core_epoch) + " outside 1.." +
                              std::to_string(E));
    if (asset < 0 || asset >= log.num_assets())
        throw EpochOutOfRange("asset index " + std::to_string(asset) + " outside 0.." +
                              std::to_string(log.num_assets() - 1));
    if (radius < 0) throw InvalidHyper("window radius must be >= 0");

    AuditWindow w;
    w.core_epoch = core_epoch;
    const auto& core_cell = log.observations[static_cast<std::size_t>(core_epoch - 1)]
                                            [static_cast<std::size_t>(asset)];
    for (const Observation& o : core_cell)
        w.points.push_back(WindowPoint{o.spend, o.ret, 1.0, 0});

    std::vector<int> dist_list;
    std::vector<Index> epoch_list;
    for (int d = 1; d <= radius; ++d) {
        if (core_epoch - d >= 1) {
            dist_list.push_back(d);
            epoch_list.push_back(core_epoch - d);
        }
        if (core_epoch + d <= E) {
            dist_list.push_back(d);
            epoch_list.push_back(core_epoch + d);
        }
    }
    const std::vector<double> weights = compute_aux_weights(dist_list, alpha_aux, tau_w);
    for (std::size_t k = 0; k < epoch_list.size(); ++k) {
        const auto& cell = log.observations[static_cast<std::size_t>(epoch_list[k] - 1)]
                                           [static_cast<std::size_t>(asset)];
        for (const Observation& o : cell)
            w.points.push_back(WindowPoint{o.spend, o.ret, weights[k], dist_list[k]});
    }

    w.s_lo = std::numeric_limits<double>::infinity();
    w.s_hi = -std::numeric_limits<double>::infinity();
    w.s_hi_all = -std::numeric_limits<double>::infinity();
    for (const WindowPoint& p : w.points) {
        if (p.distance == 0) {
            w.s_lo = std::min(w.s_lo, p.spend);
            w.s_hi = std::max(w.s_hi, p.spend);
        }
        w.s_hi_all = std::max(w.s_hi_all, p.spend);
    }
    return w;
}

}  // namespace regaudit
