#include "regaudit/greybox.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "regaudit/errors.hpp"
#include "regaudit/isotonic.hpp"
#include "regaudit/rng.hpp"

namespace regaudit {

namespace {

constexpr double kSqrt5 = 2.2360679774997896964091736687747;
constexpr int kIsoGridNodes = 64;

double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          int iters) {
    constexpr double invphi = 0.6180339887498948482;
    double a = lo, b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    for (int k = 0; k < iters; ++k) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

void KernelHyper::validate() const {
    if (!(signal_var > 0.0) || !std::isfinite(signal_var) || !(lengthscale > 0.0) ||
        !std::isfinite(lengthscale) || !(noise_var > 0.0) || !std::isfinite(noise_var))
        throw InvalidHyper("kernel hyperparameters must be strictly positive and finite");
}

void FitConfig::validate() const {
    if (!(alpha_aux > 0.0 && alpha_aux <= 1.0))
        throw InvalidHyper("alpha_aux must lie in (0,1]");
    if (!(tau_w > 0.0)) throw InvalidHyper("tau_w must be > 0");
    if (window_radius < 0) throw InvalidHyper("window_radius must be >= 0");
    if (saturation_restarts < 1) throw InvalidHyper("saturation_restarts must be >= 1");
    if (!(sigma_min_sq > 0.0)) throw InvalidHyper("sigma_min_sq must be > 0");
    if (!(noise_floor > 0.0)) throw InvalidHyper("noise_floor must be > 0");
    if (!(lengthscale_lo_factor > 0.0) || !(lengthscale_hi_factor >= lengthscale_lo_factor))
        throw InvalidHyper("lengthscale factor bounds inconsistent");
    if (kappa_right < 0.0) throw InvalidHyper("kappa_right must be >= 0");
    if (inflation_p < 1.0) throw InvalidHyper("inflation p must be >= 1");
}

double matern52(double r, const KernelHyper& hyper) {
    const double z = kSqrt5 * r / hyper.lengthscale;
    return hyper.signal_var * (1.0 + z + z * z / 3.0) * std::exp(-z);
}

double matern52_dr(double r, const KernelHyper& hyper) {
    const double l = hyper.lengthscale;
    const double z = kSqrt5 * r / l;
    return -hyper.signal_var * (5.0 * r / (3.0 * l * l)) * (1.0 + z) * std::exp(-z);
}

// ---------------------------------------------------------------------------
// GpPosterior

GpPosterior GpPosterior::fit(Vector inputs, Vector targets, Vector noise_variances,
                             KernelHyper hyper, double prior_mean) {
    hyper.validate();
    if (inputs.size() != targets.size() || inputs.size() != noise_variances.size())
        throw ShapeMismatch("GP training arrays must have equal length");

    GpPosterior gp;
    gp.inputs_ = std::move(inputs);
    gp.targets_ = std::move(targets);
    gp.noise_ = std::move(noise_variances);
    gp.hyper_ = hyper;
    gp.prior_mean_ = prior_mean;

    const Index n = gp.inputs_.size();
    if (n == 0) {
        gp.log_marginal_ = 0.0;
        return gp;
    }

    Matrix K(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j <= i; ++j) {
            const double k = matern52(std::abs(gp.inputs_[i] - gp.inputs_[j]), hyper);
            K(i, j) = k;
            K(j, i) = k;
        }
        K(i, i) += gp.noise_[i];
    }

    // Jitter ladder: try clean, then 1e-10 .. 1e-4 in decade steps.
    double jitter = 0.0;
    bool ok = false;
    for (int step = -1; step <= 6; ++step) {
        jitter = (step < 0) ? 0.0 : std::pow(10.0, -10 + step);
        Matrix Kj = K;
        if (jitter > 0.0) Kj.diagonal().array() += jitter;
        gp.llt_.compute(Kj);
        if (gp.llt_.info() == Eigen::Success) {
            ok = true;
            break;
        }
    }
    if (!ok)
        throw SingularKernel("kernel factorization failed at max jitter 1e-4 (n=" +
                             std::to_string(n) + ")");
    gp.jitter_ = jitter;

    const Vector centered = gp.targets_.array() - prior_mean;
    gp.alpha_ = gp.llt_.solve(centered);

    const double quad = centered.dot(gp.alpha_);
    const double logdet = 2.0 * gp.llt_.matrixLLT().diagonal().array().log().sum();
    gp.log_marginal_ = -0.5 * quad - 0.5 * logdet -
                       0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    return gp;
}

double GpPosterior::mean(double s) const {
    const Index n = inputs_.size();
    if (n == 0) return prior_mean_;
    double acc = 0.0;
    for (Index i = 0; i < n; ++i)
        acc += matern52(std::abs(s - inputs_[i]), hyper_) * alpha_[i];
    return prior_mean_ + acc;
}

double GpPosterior::mean_slope(double s) const {
    const Index n = inputs_.size();
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double d = s - inputs_[i];
        if (d == 0.0) continue;  // dk/ds = 0 at r = 0
        const double sign = d > 0.0 ? 1.0 : -1.0;
        acc += sign * matern52_dr(std::abs(d), hyper_) * alpha_[i];
    }
    return acc;
}

double GpPosterior::variance(double s) const {
    const Index n = inputs_.size();
    const double prior_var = hyper_.signal_var;
    if (n == 0) return prior_var;
    Vector ks(n);
    for (Index i = 0; i < n; ++i) ks[i] = matern52(std::abs(s - inputs_[i]), hyper_);
    const Vector v = llt_.matrixL().solve(ks);
    const double var = prior_var - v.squaredNorm();
    return std::max(var, 1e-12 * prior_var);
}

// ---------------------------------------------------------------------------
// Saturation fit

SaturationParams fit_saturation(const Vector& spends, const Vector& returns,
                                const Vector& weights, int restarts, std::uint64_t seed) {
    const Index n = spends.size();
    if (returns.size() != n || weights.size() != n)
        throw ShapeMismatch("saturation fit arrays must have equal length");
    if (restarts < 1) throw InvalidHyper("restarts must be >= 1");

    double s_min = std::numeric_limits<double>::infinity(), s_max = 0.0;
    bool distinct = false;
    for (Index i = 0; i < n; ++i) {
        s_min = std::min(s_min, spends[i]);
        s_max = std::max(s_max, spends[i]);
        if (spends[i] != spends[0]) distinct = true;
    }
    if (n < 2 || !distinct)
        throw DegenerateData("saturation fit needs >= 2 points with >= 2 distinct spends");

    if (returns.cwiseAbs().maxCoeff() == 0.0) return SaturationParams{0.0, 0.0};

    const double b_lo = 1e-4 / s_max;
    const double b_hi = 100.0 / s_max;

    // Profile the asymptote: for fixed b the optimal a is a weighted
    // least-squares coefficient, clipped at zero.
    const auto profile_a = [&](double b) {
        double num = 0.0, den = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double phi = 1.0 - std::exp(-b * spends[i]);
            num += weights[i] * returns[i] * phi;
            den += weights[i] * phi * phi;
        }
        return den > 0.0 ? std::max(0.0, num / den) : 0.0;
    };
    const auto sse = [&](double b) {
        const double a = profile_a(b);
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double r = returns[i] - a * (1.0 - std::exp(-b * spends[i]));
            acc += weights[i] * r * r;
        }
        return acc;
    };

    std::vector<double> starts;
    // Slope heuristic: weighted line through the small-spend half gives
    // mu'(0) ~ a*b, so b0 = slope / max(returns).
    {
        std::vector<double> sorted(spends.data(), spends.data() + n);
        std::sort(sorted.begin(), sorted.end());
        const double s_med = sorted[static_cast<std::size_t>(n) / 2];
        double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (Index i = 0; i < n; ++i) {
            if (spends[i] > s_med) continue;
            sw += weights[i];
            sx += weights[i] * spends[i];
            sy += weights[i] * returns[i];
            sxx += weights[i] * spends[i] * spends[i];
            sxy += weights[i] * spends[i] * returns[i];
        }
        const double den = sw * sxx - sx * sx;
        double slope = 0.0;
        if (den > 0.0) slope = (sw * sxy - sx * sy) / den;
        const double a0 = std::max(returns.maxCoeff(), 1e-12);
        double b0 = slope > 0.0 ? slope / a0 : std::sqrt(b_lo * b_hi);
        starts.push_back(std::clamp(b0, b_lo, b_hi));
    }
    // Deterministic coarse scan keeps the multi-start honest on multimodal
    // profiles.
    {
        double best_scan = starts[0];
        double best_val = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 32; ++k) {
            const double t = static_cast<double>(k) / 31.0;
            const double b = b_lo * std::pow(b_hi / b_lo, t);
            const double v = sse(b);
            if (v < best_val) {
                best_val = v;
                best_scan = b;
            }
        }
        starts.push_back(best_scan);
    }
    Rng rng = Rng::substream(seed, 0x5a70);
    for (int r = 1; r < restarts; ++r)
        starts.push_back(b_lo * std::pow(b_hi / b_lo, rng.next_double()));

    double best_b = starts[0];
    double best_sse = std::numeric_limits<double>::infinity();
    for (double b0 : starts) {
        const double lo = std::max(b_lo, b0 / 16.0);
        const double hi = std::min(b_hi, b0 * 16.0);
        const double b = golden_section_min(sse, lo, hi, 120);
        const double v = sse(b);
        if (v < best_sse || (v == best_sse && b < best_b)) {
            best_sse = v;
            best_b = b;
        }
    }
    return SaturationParams{profile_a(best_b), best_b};
}

// ---------------------------------------------------------------------------
// GP hyperparameter search

namespace {

struct GpSearchSpace {
    double len_lo, len_hi;
    double noise_lo, noise_hi;
    double signal_lo, signal_hi;
};

GpPosterior search_gp(const Vector& inputs, const Vector& targets, const Vector& weights,
                      double noise_floor, double len_lo_factor, double len_hi_factor,
                      double prior_mean) {
    const Index n = inputs.size();
    if (n == 0) throw DegenerateData("GP fit needs at least one point");
    if (targets.size() != n || weights.size() != n)
        throw ShapeMismatch("GP fit arrays must have equal length");
    for (Index i = 0; i < n; ++i)
        if (!(weights[i] > 0.0)) throw InvalidHyper("GP weights must be > 0");

    double range = inputs.maxCoeff() - inputs.minCoeff();
    if (range <= 0.0) range = std::max(1.0, std::abs(inputs[0]));

    const Vector centered = targets.array() - prior_mean;
    double var_y = 0.0;
    if (n > 0) var_y = centered.squaredNorm() / static_cast<double>(n) -
                       std::pow(centered.mean(), 2);
    const double var_scale = std::max(var_y, 1e-12);

    GpSearchSpace sp;
    sp.len_lo = len_lo_factor * range;
    sp.len_hi = len_hi_factor * range;
    sp.noise_lo = noise_floor;
    sp.noise_hi = std::max(4.0 * var_scale, noise_floor * 4.0);
    // The residual GP must not carry more variance than the residuals.
    sp.signal_lo = 1e-6 * var_scale;
    sp.signal_hi = 2.0 * var_scale;

    const Vector inv_w = weights.cwiseInverse();
    const auto try_fit = [&](double sv, double len, double nv) -> GpPosterior {
        return GpPosterior::fit(inputs, targets, nv * inv_w,
                                KernelHyper{sv, len, nv}, prior_mean);
    };

    std::vector<double> signal_grid = {0.05 * var_scale, 0.25 * var_scale, var_scale,
                                       2.0 * var_scale};
    std::vector<double> len_grid;
    for (int k = 0; k < 5; ++k) {
        const double t = static_cast<double>(k) / 4.0;
        len_grid.push_back(sp.len_lo * std::pow(sp.len_hi / sp.len_lo, t));
    }
    std::vector<double> noise_grid = {noise_floor, 0.01 * var_scale, 0.1 * var_scale,
                                      0.5 * var_scale, var_scale, 2.0 * var_scale};
    for (double& v : noise_grid) v = std::clamp(v, sp.noise_lo, sp.noise_hi);
    for (double& v : signal_grid) v = std::clamp(v, sp.signal_lo, sp.signal_hi);

    bool any_ok = false;
    GpPosterior best;
    double best_lml = -std::numeric_limits<double>::infinity();
    double cur_sv = signal_grid[0], cur_len = len_grid[0], cur_nv = noise_grid[0];
    for (double sv : signal_grid) {
        for (double len : len_grid) {
            for (double nv : noise_grid) {
                try {
                    GpPosterior gp = try_fit(sv, len, nv);
                    any_ok = true;
                    if (gp.log_marginal() > best_lml) {
                        best_lml = gp.log_marginal();
                        best = std::move(gp);
                        cur_sv = sv;
                        cur_len = len;
                        cur_nv = nv;
                    }
                } catch (const SingularKernel&) {
                    continue;  // skip this combination, keep searching
                }
            }
        }
    }
    if (!any_ok) throw SingularKernel("all kernel hyperparameter candidates failed to factorize");

    // Coordinate refinement: halve/double each hyperparameter while the
    // marginal likelihood improves.
    for (int round = 0; round < 40; ++round) {
        bool improved = false;
        struct Axis {
            double* value;
            double lo, hi;
        };
        Axis axes[3] = {{&cur_sv, sp.signal_lo, sp.signal_hi},
                        {&cur_len, sp.len_lo, sp.len_hi},
                        {&cur_nv, sp.noise_lo, sp.noise_hi}};
        for (Axis& ax : axes) {
            for (double factor : {0.5, 2.0}) {
                const double cand = std::clamp(*ax.value * factor, ax.lo, ax.hi);
                if (cand == *ax.value) continue;
                try {
                    GpPosterior gp = try_fit(&cur_sv == ax.value ? cand : cur_sv,
                                             &cur_len == ax.value ? cand : cur_len,
                                             &cur_nv == ax.value ? cand : cur_nv);
                    if (gp.log_marginal() > best_lml + 1e-12 * std::abs(best_lml)) {
                        best_lml = gp.log_marginal();
                        best = std::move(gp);
                        *ax.value = cand;
                        improved = true;
                    }
                } catch (const SingularKernel&) {
                    continue;
                }
            }
        }
        if (!improved) break;
    }
    return best;
}

}  // namespace

GpPosterior fit_mean_gp(const Vector& spends, const Vector& residuals,
                        const Vector& weights, const FitConfig& config) {
    config.validate();
    return search_gp(spends, residuals, weights, config.noise_floor,
                     config.lengthscale_lo_factor, config.lengthscale_hi_factor, 0.0);
}

GpPosterior fit_variance_gp(const Vector& spends, const Vector& post_mean_residuals,
                            const Vector& weights, const FitConfig& config) {
    config.validate();
    const Index n = spends.size();
    // Targets floored so that the chi^2-offset prediction bottoms out at
    // exactly sigma_min_sq.
    const double floor_sq = config.sigma_min_sq * std::exp(-kLogChi2Offset);
    Vector targets(n);
    for (Index i = 0; i < n; ++i)
        targets[i] = std::log(std::max(post_mean_residuals[i] * post_mean_residuals[i],
                                       floor_sq));
    const double m_sigma = targets.mean();
    return search_gp(spends, targets, weights, config.noise_floor,
                     config.lengthscale_lo_factor, config.lengthscale_hi_factor, m_sigma);
}

// ---------------------------------------------------------------------------
// ResponseModel

double ResponseModel::raw_mean(double s) const {
    if (kind == ModelKind::Constant) return constant_value;
    return saturation.value(s) + mean_gp.mean(s);
}

double ResponseModel::predict_mean(double s) const {
    if (kind == ModelKind::Constant) return constant_value;
    if (s <= s_hi || iso_grid.empty()) return raw_mean(s);
    // Piecewise-linear through (s_hi, anchor) and the projected grid;
    // constant continuation beyond the last node.
    double x0 = s_hi, y0 = iso_anchor;
    for (std::size_t k = 0; k < iso_grid.size(); ++k) {
        if (s <= iso_grid[k]) {
            const double t = (s - x0) / (iso_grid[k] - x0);
            return y0 + t * (iso_values[k] - y0);
        }
        x0 = iso_grid[k];
        y0 = iso_values[k];
    }
    return iso_values.back();
}

double ResponseModel::predict_epistemic_var(double s) const {
    const double base =
        kind == ModelKind::Constant ? constant_epi_var : mean_gp.variance(s);
    const double t = inflation.term(s, s_hi_all);
    return base + t * t;
}

double ResponseModel::predict_outcome_sd(double s) const {
    if (kind == ModelKind::Constant)
        return std::max(constant_out_sd, std::sqrt(sigma_min_sq));
    const double v = std::max(std::exp(var_gp.mean(s) + kLogChi2Offset), sigma_min_sq);
    return std::sqrt(v);
}

double ResponseModel::mean_slope(double s) const {
    if (kind == ModelKind::Constant) return 0.0;
    if (s <= s_hi - fd_step) return saturation.slope(s) + mean_gp.mean_slope(s);
    const double lo = std::max(0.0, s - fd_step);
    const double hi = s + fd_step;
    return (predict_mean(hi) - predict_mean(lo)) / (hi - lo);
}

ResponseModel fit_response_model(const AuditWindow& window, const FitConfig& config,
                                 const std::string& asset_id, Index epoch) {
    config.validate();
    const std::size_t n = window.points.size();
    if (n == 0) throw DegenerateData("empty audit window (asset " + asset_id + ")");

    Vector s(n), y(n), w(n);
    for (std::size_t k = 0; k < n; ++k) {
        s[static_cast<Index>(k)] = window.points[k].spend;
        y[static_cast<Index>(k)] = window.points[k].ret;
        w[static_cast<Index>(k)] = window.points[k].weight;
    }

    ResponseModel model;
    model.asset_id = asset_id;
    model.epoch = epoch;
    model.s_lo = window.s_lo;
    model.s_hi = window.s_hi;
    model.s_hi_all = window.s_hi_all;
    model.sigma_min_sq = config.sigma_min_sq;

    const double window_min = s.minCoeff();
    const double window_max = s.maxCoeff();
    double range = window_max - window_min;
    if (range <= 0.0) range = std::max(1.0, window.s_hi);
    model.fd_step = 1e-4 * range;

    model.inflation.kappa_right = config.kappa_right;
    model.inflation.p = config.inflation_p;
    double s_scale = config.s_scale;
    if (!(s_scale > 0.0)) s_scale = window.s_hi_all - window_min;
    if (!(s_scale > 0.0)) s_scale = std::max(window.s_hi_all, 1.0);
    model.inflation.s_scale = s_scale;

    // Degenerate window: constant model at the weighted mean.
    std::size_t core_n = 0;
    bool core_distinct = false;
    double first_core = 0.0;
    bool saw_core = false;
    for (const WindowPoint& p : window.points) {
        if (p.distance != 0) continue;
        ++core_n;
        if (!saw_core) {
            first_core = p.spend;
            saw_core = true;
        } else if (p.spend != first_core) {
            core_distinct = true;
        }
    }
    if (core_n < 2 || !core_distinct) {
        model.kind = ModelKind::Constant;
        const double wsum = w.sum();
        const double mean = wsum > 0.0 ? y.dot(w) / wsum : 0.0;
        model.constant_value = mean;
        model.saturation = SaturationParams{mean, 0.0};
        double rss = 0.0, wsq = 0.0, core_rss = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double r = y[static_cast<Index>(k)] - mean;
            rss += w[static_cast<Index>(k)] * r * r;
            wsq += w[static_cast<Index>(k)] * w[static_cast<Index>(k)];
            if (window.points[k].distance == 0) core_rss += r * r;
        }
        const double var_w = wsum > 0.0 ? rss / wsum : 0.0;
        const double n_eff = wsq > 0.0 ? wsum * wsum / wsq : 1.0;
        model.constant_epi_var = var_w / std::max(n_eff, 1.0);
        const double core_rms =
            core_n > 0 ? std::sqrt(core_rss / static_cast<double>(core_n)) : 0.0;
        model.constant_out_sd = std::max(core_rms, std::sqrt(config.sigma_min_sq));
        model.inflation.sigma_res = core_rms;
        return model;
    }

    try {
        model.saturation =
            fit_saturation(s, y, w, config.saturation_restarts, config.seed);
    } catch (const DegenerateData&) {
        // Distinct core spends guaranteed above; reaching here means aux
        // degeneracies only, fall back to the constant model path.
        AuditWindow core_only = window;
        core_only.points.erase(
            std::remove_if(core_only.points.begin(), core_only.points.end(),
                           [](const WindowPoint& p) { return p.distance != 0; }),
            core_only.points.end());
        return fit_response_model(core_only, config, asset_id, epoch);
    }

    Vector residuals(s.size());
    for (Index i = 0; i < s.size(); ++i)
        residuals[i] = y[i] - model.saturation.value(s[i]);

    try {
        model.mean_gp = fit_mean_gp(s, residuals, w, config);
    } catch (const SingularKernel& ex) {
        throw SingularKernel("mean GP (asset " + asset_id + ", epoch " +
                             std::to_string(epoch) + "): " + ex.what());
    }

    Vector post_res(s.size());
    double core_sq = 0.0;
    std::size_t core_cnt = 0;
    for (Index i = 0; i < s.size(); ++i) {
        post_res[i] = residuals[i] - model.mean_gp.mean(s[i]);
        if (window.points[static_cast<std::size_t>(i)].distance == 0) {
            core_sq += post_res[i] * post_res[i];
            ++core_cnt;
        }
    }
    model.inflation.sigma_res =
        core_cnt > 0 ? std::sqrt(core_sq / static_cast<double>(core_cnt)) : 0.0;

    try {
        model.var_gp = fit_variance_gp(s, post_res, w, config);
    } catch (const SingularKernel& ex) {
        throw SingularKernel("variance GP (asset " + asset_id + ", epoch " +
                             std::to_string(epoch) + "): " + ex.what());
    }

    // Extrapolation grid beyond the core range, boundary-anchored.
    model.iso_anchor = model.saturation.value(window.s_hi) + model.mean_gp.mean(window.s_hi);
    model.iso_grid.resize(kIsoGridNodes);
    std::vector<double> raw(kIsoGridNodes);
    for (int k = 0; k < kIsoGridNodes; ++k) {
        const double sx =
            window.s_hi + (2.0 * range) * static_cast<double>(k + 1) / kIsoGridNodes;
        model.iso_grid[static_cast<std::size_t>(k)] = sx;
        raw[static_cast<std::size_t>(k)] =
            model.saturation.value(sx) + model.mean_gp.mean(sx);
    }
    model.iso_values = isotonic_project(raw, model.iso_anchor);
    return model;
}

}  // namespace regaudit
