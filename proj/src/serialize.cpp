#include "regaudit/serialize.hpp"

#include "regaudit/errors.hpp"

namespace regaudit {

namespace {

constexpr int kModelSchemaVersion = 1;

Json gp_to_json(const GpPosterior& gp) {
    return Json{{"inputs", vector_to_json(gp.inputs())},
                {"targets", vector_to_json(gp.targets())},
                {"noise_variances", vector_to_json(gp.noise_variances())},
                {"hyper",
                 {{"signal_var", gp.hyper().signal_var},
                  {"lengthscale", gp.hyper().lengthscale},
                  {"noise_var", gp.hyper().noise_var}}},
                {"prior_mean", gp.prior_mean()},
                {"jitter", gp.jitter()}};
}

GpPosterior gp_from_json(const Json& j) {
    KernelHyper hyper{j.at("hyper").at("signal_var").get<double>(),
                      j.at("hyper").at("lengthscale").get<double>(),
                      j.at("hyper").at("noise_var").get<double>()};
    return GpPosterior::fit(vector_from_json(j.at("inputs")),
                            vector_from_json(j.at("targets")),
                            vector_from_json(j.at("noise_variances")), hyper,
                            j.at("prior_mean").get<double>());
}

}  // namespace

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Index e = 0; e < m.rows(); ++e) {
        Json row = Json::array();
        for (Index i = 0; i < m.cols(); ++i) row.push_back(m(e, i));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("expected a non-empty matrix");
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Index e = 0; e < rows; ++e) {
        if (static_cast<Index>(j.at(static_cast<std::size_t>(e)).size()) != cols)
            throw ConfigError("ragged matrix rows");
        for (Index i = 0; i < cols; ++i)
            m(e, i) = j.at(static_cast<std::size_t>(e)).at(static_cast<std::size_t>(i))
                          .get<double>();
    }
    return m;
}

Json vector_to_json(const Vector& v) {
    Json arr = Json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Vector vector_from_json(const Json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i)
        v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

Json response_model_to_json(const ResponseModel& model) {
    Json j{{"schema_version", kModelSchemaVersion},
           {"kind", model.kind == ModelKind::Constant ? "constant" : "full"},
           {"asset_id", model.asset_id},
           {"epoch", model.epoch},
           {"saturation", {{"a", model.saturation.a}, {"b", model.saturation.b}}},
           {"core_range", {model.s_lo, model.s_hi}},
           {"weighted_max", model.s_hi_all},
           {"inflation",
            {{"kappa_right", model.inflation.kappa_right},
             {"p", model.inflation.p},
             {"s_scale", model.inflation.s_scale},
             {"sigma_res", model.inflation.sigma_res}}},
           {"sigma_min_sq", model.sigma_min_sq},
           {"fd_step", model.fd_step}};
    if (model.kind == ModelKind::Constant) {
        j["constant"] = {{"value", model.constant_value},
                         {"epi_var", model.constant_epi_var},
                         {"out_sd", model.constant_out_sd}};
    } else {
        j["mean_gp"] = gp_to_json(model.mean_gp);
        j["var_gp"] = gp_to_json(model.var_gp);
        j["iso"] = {{"anchor", model.iso_anchor},
                    {"grid", model.iso_grid},
                    {"values", model.iso_values}};
    }
    return j;
}

ResponseModel response_model_from_json(const Json& j) {
    if (j.at("schema_version").get<int>() != kModelSchemaVersion)
        throw ConfigError("unsupported model schema version");
    ResponseModel m;
    m.kind = j.at("kind").get<std::string>() == "constant" ? ModelKind::Constant
                                                           : ModelKind::Full;
    m.asset_id = j.at("asset_id").get<std::string>();
    m.epoch = j.at("epoch").get<Index>();
    m.saturation.a = j.at("saturation").at("a").get<double>();
    m.saturation.b = j.at("saturation").at("b").get<double>();
    m.s_lo = j.at("core_range").at(0).get<double>();
    m.s_hi = j.at("core_range").at(1).get<double>();
    m.s_hi_all = j.at("weighted_max").get<double>();
    m.inflation.kappa_right = j.at("inflation").at("kappa_right").get<double>();
    m.inflation.p = j.at("inflation").at("p").get<double>();
    m.inflation.s_scale = j.at("inflation").at("s_scale").get<double>();
    m.inflation.sigma_res = j.at("inflation").at("sigma_res").get<double>();
    m.sigma_min_sq = j.at("sigma_min_sq").get<double>();
    m.fd_step = j.at("fd_step").get<double>();
    if (m.kind == ModelKind::Constant) {
        m.constant_value = j.at("constant").at("value").get<double>();
        m.constant_epi_var = j.at("constant").at("epi_var").get<double>();
        m.constant_out_sd = j.at("constant").at("out_sd").get<double>();
        return m;
    }
    m.mean_gp = gp_from_json(j.at("mean_gp"));
    m.var_gp = gp_from_json(j.at("var_gp"));
    m.iso_anchor = j.at("iso").at("anchor").get<double>();
    m.iso_grid = j.at("iso").at("grid").get<std::vector<double>>();
    m.iso_values = j.at("iso").at("values").get<std::vector<double>>();
    return m;
}

Json oracle_solution_to_json(const OracleSolution& s) {
    return Json{{"spend", matrix_to_json(s.spend)},
                {"objective", s.objective},
                {"diagnostics",
                 {{"iterations", s.diagnostics.iterations},
                  {"restarts_used", s.diagnostics.restarts_used},
                  {"max_violation", s.diagnostics.max_violation},
                  {"best_start", s.diagnostics.best_start}}}};
}

}  // namespace regaudit
