#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

#include "powergp/errors.hpp"
#include "powergp/likelihood.hpp"
#include "powergp/svgp.hpp"

namespace powergp {

/// Open-interval clipping margin applied before the logit warp. Eq. of the
/// warp is undefined at exact bounds, which dominate real SCADA data.
struct WarpConfig {
    double epsilon = 1e-4;
};

inline void validate_warp(const WarpConfig& cfg) {
    if (!(cfg.epsilon > 0.0 && cfg.epsilon <= 0.01)) {
        throw ValidationError("warped", "warp epsilon must lie in (0, 0.01]");
    }
}

/// ln(p / (1 - p)) after clipping p into [eps, 1 - eps].
inline double logit_warp(double p, const WarpConfig& cfg) {
    validate_warp(cfg);
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("warped", "logit warp requires p in [0, 1]");
    }
    const double c = std::min(std::max(p, cfg.epsilon), 1.0 - cfg.epsilon);
    return std::log(c / (1.0 - c));
}

/// Vector warp; `clipped` (when given) receives the count of entries that
/// hit either clipping bound.
inline Eigen::VectorXd logit_warp(const Eigen::VectorXd& p, const WarpConfig& cfg,
                                  long* clipped = nullptr) {
    validate_warp(cfg);
    std::vector<long> bad;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) bad.push_back(static_cast<long>(i));
    }
    if (!bad.empty()) {
        throw SupportError("warped",
                           std::to_string(bad.size()) + " target(s) outside [0, 1]",
                           std::move(bad));
    }
    Eigen::VectorXd out(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double c = std::min(std::max(p[i], cfg.epsilon), 1.0 - cfg.epsilon);
        if (clipped != nullptr && (p[i] < cfg.epsilon || p[i] > 1.0 - cfg.epsilon)) ++*clipped;
        out[i] = std::log(c / (1.0 - c));
    }
    return out;
}

/// 1 / (1 + exp(-z)), saturation-safe; the result is kept strictly inside
/// (0, 1) so downstream physical-bound guarantees hold.
inline double inv_logit(double z) {
    if (!std::isfinite(z)) throw ValidationError("warped", "inv_logit requires finite input");
    double y = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    if (y >= 1.0) y = 1.0 - 1e-16;
    if (y <= 0.0) y = 1e-300;
    return y;
}

inline Eigen::VectorXd inv_logit(const Eigen::VectorXd& z) {
    Eigen::VectorXd out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out[i] = inv_logit(z[i]);
    return out;
}

/// Heteroscedastic-Gaussian SVGP fitted in the warped space.
struct WarpedModel {
    VariationalState state;
    WarpConfig warp;
    double clipped_fraction = 0.0;
    std::vector<TracePoint> trace;
    double initial_elbo = 0.0;
    double final_elbo = 0.0;
    long clamp_events = 0;
};

/// Warps the power targets via the logit, then trains a two-latent
/// heteroscedastic-Gaussian SVGP on the warped data.
inline WarpedModel warped_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& p,
                              std::vector<KernelSpec> kernels, const WarpConfig& warp_cfg,
                              const TrainConfig& train_cfg, int inducing_count = 50) {
    validate_warp(warp_cfg);
    if (kernels.size() != 2) {
        throw ValidationError("warped", "warped model needs one kernel per latent (2)");
    }
    if (x.size() != p.size() || x.size() < 1) {
        throw ValidationError("warped", "inputs and targets must be equally sized, N >= 1");
    }
    long clipped = 0;
    const Eigen::VectorXd w = logit_warp(p, warp_cfg, &clipped);
    const Eigen::VectorXd z = default_inducing_points(x, inducing_count);
    auto init = make_data_init_state(std::move(kernels), z, x, w, hetero_gaussian_likelihood());
    TrainConfig cfg = train_cfg;
    cfg.minibatch_size = std::min<int>(cfg.minibatch_size, static_cast<int>(x.size()));
    auto trained = train_svgp(std::move(init.state), hetero_gaussian_likelihood(), x, w, cfg);
    WarpedModel model;
    model.state = std::move(trained.state);
    model.warp = warp_cfg;
    model.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(p.size());
    model.trace = std::move(trained.trace);
    model.initial_elbo = trained.initial_elbo;
    model.final_elbo = trained.final_elbo;
    model.clamp_events = trained.clamp_events;
    return model;
}

struct WarpedPrediction {
    double mean;         // inv_logit(mu_w), strictly inside (0, 1)
    double lower;        // inv_logit(mu_w - 2 sigma_w)
    double upper;        // inv_logit(mu_w + 2 sigma_w)
    double warped_mean;  // mu_w
    double warped_sd;    // sigma_w
};

/// Warped-space predictive moments and the unwarped mean with a +/- 2 sigma
/// band mapped through the inverse warp. No closed-form unwarped density is
/// claimed; the band is the reporting device.
inline std::vector<WarpedPrediction> warped_predict(const WarpedModel& model,
                                                    const Eigen::VectorXd& x_star,
                                                    const JitterSchedule& jitter = {}) {
    if (model.state.latent_count() != 2) {
        throw StateError("warped", "prediction requires a trained two-latent state");
    }
    const Marginals loc = latent_marginals(model.state, 0, x_star, jitter);
    const Marginals noise = latent_marginals(model.state, 1, x_star, jitter);
    std::vector<WarpedPrediction> out(static_cast<std::size_t>(x_star.size()));
    for (Eigen::Index i = 0; i < x_star.size(); ++i) {
        const double mu_w = loc.mean[i];
        // location-latent variance plus the log-normal mean of the noise latent
        const double noise_mean =
            std::exp(detail::clamp_latent(noise.mean[i] + 0.5 * noise.variance[i]));
        const double sd_w = std::sqrt(loc.variance[i] + noise_mean);
        out[static_cast<std::size_t>(i)] = {inv_logit(mu_w), inv_logit(mu_w - 2.0 * sd_w),
                                            inv_logit(mu_w + 2.0 * sd_w), mu_w, sd_w};
    }
    return out;
}

}  // namespace powergp
