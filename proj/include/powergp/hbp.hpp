#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "powergp/errors.hpp"
#include "powergp/likelihood.hpp"
#include "powergp/math.hpp"
#include "powergp/rng.hpp"
#include "powergp/svgp.hpp"

namespace powergp {

inline constexpr int kMixtureStorageCap = 10000;
inline constexpr int kIntervalDraws = 2000;

/// Bounded predictive distribution at one test input: representative shape
/// parameters, an optional sampled mixture of Beta components, the predictive
/// mean and empirical 95% interval (all strictly inside (0, 1)).
struct BetaPrediction {
    double alpha_star = 1.0;
    double beta_star = 1.0;
    std::vector<std::pair<double, double>> mixture;  // (alpha_s, beta_s)
    std::vector<double> mixture_log_norm;            // cached log B(alpha_s, beta_s)
    double mean = 0.5;
    double lower95 = 0.0;
    double upper95 = 1.0;
};

enum class HbpMode { moment, sample };

struct HbpPredictConfig {
    HbpMode mode = HbpMode::sample;
    int samples = 1000;
    std::uint64_t seed = 0;
};

/// log predictive density at y: a single Beta when there is no mixture,
/// otherwise the log of the average of the component densities
/// (log-sum-exp).
inline double hbp_log_density(const BetaPrediction& pred, double y) {
    if (!(y > 0.0 && y < 1.0)) {
        throw SupportError("hbp", "predictive density requires y in (0, 1)");
    }
    const double ly = std::log(y);
    const double l1y = std::log1p(-y);
    if (pred.mixture.empty()) {
        const double log_norm = detail::log_gamma_fast(pred.alpha_star) +
                                detail::log_gamma_fast(pred.beta_star) -
                                detail::log_gamma_fast(pred.alpha_star + pred.beta_star);
        return (pred.alpha_star - 1.0) * ly + (pred.beta_star - 1.0) * l1y - log_norm;
    }
    const std::size_t s = pred.mixture.size();
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(s);
    for (std::size_t k = 0; k < s; ++k) {
        const auto& [a, b] = pred.mixture[k];
        terms[k] = (a - 1.0) * ly + (b - 1.0) * l1y - pred.mixture_log_norm[k];
        max_term = std::max(max_term, terms[k]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc / static_cast<double>(s));
}

namespace detail {

inline double exp_clamped(double f) { return std::exp(clamp_latent(f)); }

inline void finalize_interval(BetaPrediction& pred, std::vector<double>& draws) {
    std::sort(draws.begin(), draws.end());
    const auto n = static_cast<double>(draws.size());
    pred.lower95 = draws[static_cast<std::size_t>(0.025 * (n - 1.0))];
    pred.upper95 = draws[static_cast<std::size_t>(std::ceil(0.975 * (n - 1.0)))];
    if (!(pred.lower95 < pred.upper95)) {
        pred.upper95 = std::nextafter(pred.upper95, 1.0);
    }
}

}  // namespace detail

/// Bounded predictions at each test input from a trained two-latent state.
///
/// moment mode: alpha* = exp(mu1 + var1/2), beta* = exp(mu2 + var2/2)
/// (the log-normal means of the transformed latents).
/// sample mode: S joint draws of (f1, f2) define a mixture of Beta
/// components; alpha*/beta* are the sample means of the drawn shapes, and the
/// predictive mean averages the per-component Beta means. Each point uses a
/// counter-based stream derived from (seed, point index), so parallel and
/// serial prediction agree exactly.
inline std::vector<BetaPrediction> hbp_predict(const VariationalState& state,
                                               const Eigen::VectorXd& x_star,
                                               const HbpPredictConfig& cfg = {},
                                               const JitterSchedule& jitter = {}) {
    if (state.latent_count() != 2) {
        throw StateError("hbp", "prediction requires a trained two-latent state");
    }
    if (cfg.samples < 1) {
        throw ValidationError("hbp", "sample count must be >= 1");
    }
    const Marginals m1 = latent_marginals(state, 0, x_star, jitter);
    const Marginals m2 = latent_marginals(state, 1, x_star, jitter);

    std::vector<BetaPrediction> out(static_cast<std::size_t>(x_star.size()));
    for (Eigen::Index i = 0; i < x_star.size(); ++i) {
        BetaPrediction& pred = out[static_cast<std::size_t>(i)];
        Rng rng = Rng::for_point(cfg.seed, static_cast<std::uint64_t>(i));
        std::vector<double> draws;
        draws.reserve(kIntervalDraws);
        if (cfg.mode == HbpMode::moment) {
            pred.alpha_star = detail::exp_clamped(m1.mean[i] + 0.5 * m1.variance[i]);
            pred.beta_star = detail::exp_clamped(m2.mean[i] + 0.5 * m2.variance[i]);
            pred.mean = pred.alpha_star / (pred.alpha_star + pred.beta_star);
            for (int t = 0; t < kIntervalDraws; ++t) {
                draws.push_back(rng.beta(pred.alpha_star, pred.beta_star));
            }
        } else {
            const double s1 = std::sqrt(m1.variance[i]);
            const double s2 = std::sqrt(m2.variance[i]);
            const int stored = std::min(cfg.samples, kMixtureStorageCap);
            pred.mixture.reserve(static_cast<std::size_t>(stored));
            pred.mixture_log_norm.reserve(static_cast<std::size_t>(stored));
            double sum_a = 0.0;
            double sum_b = 0.0;
            double sum_mean = 0.0;
            for (int s = 0; s < cfg.samples; ++s) {
                const double a = detail::exp_clamped(m1.mean[i] + s1 * rng.normal());
                const double b = detail::exp_clamped(m2.mean[i] + s2 * rng.normal());
                sum_a += a;
                sum_b += b;
                sum_mean += a / (a + b);
                if (s < stored) {
                    pred.mixture.emplace_back(a, b);
                    pred.mixture_log_norm.push_back(detail::log_gamma_fast(a) +
                                                    detail::log_gamma_fast(b) -
                                                    detail::log_gamma_fast(a + b));
                }
            }
            pred.alpha_star = sum_a / cfg.samples;
            pred.beta_star = sum_b / cfg.samples;
            pred.mean = sum_mean / cfg.samples;
            for (int t = 0; t < kIntervalDraws; ++t) {
                const auto& [a, b] = pred.mixture[static_cast<std::size_t>(t % stored)];
                draws.push_back(rng.beta(a, b));
            }
        }
        detail::finalize_interval(pred, draws);
    }
    return out;
}

}  // namespace powergp
