#ifndef REGAUDIT_GREYBOX_HPP
#define REGAUDIT_GREYBOX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "regaudit/log_ingest.hpp"
#include "regaudit/types.hpp"

namespace regaudit {

// Nominal diminishing-returns curve mu_nom(s) = a * (1 - exp(-b*s)).
struct SaturationParams {
    double a = 0.0;  // asymptote (currency)
    double b = 0.0;  // rate (1/currency)

    double value(double s) const { return a * (1.0 - std::exp(-b * s)); }
    double slope(double s) const { return a * b * std::exp(-b * s); }
};

struct KernelHyper {
    double signal_var = 1.0;
    double lengthscale = 1.0;
    double noise_var = 1e-6;

    void validate() const;
};

// Matern(2.5): k(r) = sv * (1 + sqrt5 r/l + 5 r^2/(3 l^2)) * exp(-sqrt5 r/l).
double matern52(double r, const KernelHyper& hyper);
// d k / d r, negative for r > 0.
double matern52_dr(double r, const KernelHyper& hyper);

// -E[log chi^2_1] = gamma + log 2. The log-variance regression is trained on
// log(eps^2); adding this offset at prediction time centers exp(...) on
// sigma^2 for Gaussian outcome noise.
inline constexpr double kLogChi2Offset = 1.2703628454614782;

// Gaussian-process posterior with per-point noise variances (weight-adjusted:
// noise_var / w_t). Holds the Cholesky factor of K + diag(noise) so repeated
// predictions are cheap; refitting from the stored training data reproduces
// the posterior exactly.
class GpPosterior {
public:
    GpPosterior() = default;

    // Throws SingularKernel if the factorization fails at every jitter level
    // (ladder 1e-10 .. 1e-4 in decade steps).
    static GpPosterior fit(Vector inputs, Vector targets, Vector noise_variances,
                           KernelHyper hyper, double prior_mean = 0.0);

    double mean(double s) const;
    double mean_slope(double s) const;
    // Latent (noise-free) posterior variance; strictly positive.
    double variance(double s) const;
    double log_marginal() const { return log_marginal_; }

    Index size() const { return inputs_.size(); }
    const Vector& inputs() const { return inputs_; }
    const Vector& targets() const { return targets_; }
    const Vector& noise_variances() const { return noise_; }
    const KernelHyper& hyper() const { return hyper_; }
    double prior_mean() const { return prior_mean_; }
    double jitter() const { return jitter_; }

private:
    Vector inputs_;
    Vector targets_;
    Vector noise_;
    Vector alpha_;
    // Computed placeholder: a default-constructed LLT leaves its info enum
    // indeterminate, which trips UBSan when an empty posterior is copied.
    Eigen::LLT<Matrix> llt_{Matrix::Identity(1, 1)};
    KernelHyper hyper_{1.0, 1.0, 1e-6};
    double prior_mean_ = 0.0;
    double jitter_ = 0.0;
    double log_marginal_ = 0.0;
};

// Right-tail epistemic inflation applied beyond the weighted support:
// sigma_epi^2(s) = sigma_g^2(s) + [kappa * (max(0, s - s_hi_all)/s_scale)^p * sigma_res]^2
struct InflationParams {
    double kappa_right = 1.0;
    double p = 2.0;
    double s_scale = 1.0;
    double sigma_res = 0.0;

    double term(double s, double s_hi_all) const {
        const double over = std::max(0.0, s - s_hi_all);
        if (over == 0.0) return 0.0;
        return kappa_right * std::pow(over / s_scale, p) * sigma_res;
    }
};

struct FitConfig {
    double alpha_aux = 0.5;
    double tau_w = 1.0;
    int window_radius = 1;
    int saturation_restarts = 8;
    double sigma_min_sq = 1e-6;   // outcome-variance floor
    double noise_floor = 1e-8;    // GP observation-noise lower bound
    double lengthscale_lo_factor = 0.1;   // x window spend range
    double lengthscale_hi_factor = 10.0;
    double kappa_right = 1.0;
    double inflation_p = 2.0;
    double s_scale = 0.0;         // <= 0: use the weighted-support range
    std::uint64_t seed = 1;

    void validate() const;
};

enum class ModelKind { Full, Constant };

// Fitted per-(asset, epoch) response. Mean = saturation + GP residual inside
// the core range, boundary-anchored isotonic extrapolation beyond it;
// heteroskedastic outcome sd from the log-variance GP; epistemic variance
// from the mean GP plus right-tail inflation. Immutable once fitted.
struct ResponseModel {
    ModelKind kind = ModelKind::Full;
    std::string asset_id;
    Index epoch = 1;  // 1-based

    SaturationParams saturation;
    GpPosterior mean_gp;
    GpPosterior var_gp;

    double s_lo = 0.0;
    double s_hi = 0.0;
    double s_hi_all = 0.0;
    InflationParams inflation;
    double sigma_min_sq = 1e-6;

    double iso_anchor = 0.0;
    std::vector<double> iso_grid;    // 64 nodes on (s_hi, s_hi + 2*range]
    std::vector<double> iso_values;  // projected (non-decreasing, >= anchor)
    double fd_step = 1e-4;

    // Constant-model fallback (degenerate windows).
    double constant_value = 0.0;
    double constant_epi_var = 0.0;
    double constant_out_sd = 0.0;

    double raw_mean(double s) const;
    double predict_mean(double s) const;
    double predict_epistemic_var(double s) const;
    double predict_outcome_sd(double s) const;
    double mean_slope(double s) const;
};

// Weighted nonlinear least squares for (a, b), multi-start over the rate with
// the asymptote profiled out in closed form. Deterministic given seed.
// Throws DegenerateData when fewer than 2 distinct spends are present.
SaturationParams fit_saturation(const Vector& spends, const Vector& returns,
                                const Vector& weights, int restarts, std::uint64_t seed);

// Residual-mean GP: grid search + coordinate refinement on the weighted-noise
// log marginal likelihood; per-point noise = noise_var / w_t.
GpPosterior fit_mean_gp(const Vector& spends, const Vector& residuals,
                        const Vector& weights, const FitConfig& config);

// Log-variance GP on log(max(eps^2, sigma_min^2)) with constant prior mean
// set to the average target.
GpPosterior fit_variance_gp(const Vector& spends, const Vector& post_mean_residuals,
                            const Vector& weights, const FitConfig& config);

ResponseModel fit_response_model(const AuditWindow& window, const FitConfig& config,
                                 const std::string& asset_id = "", Index epoch = 1);

}  // namespace regaudit

#endif  // REGAUDIT_GREYBOX_HPP
