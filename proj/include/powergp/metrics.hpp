#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "powergp/errors.hpp"
#include "powergp/hbp.hpp"
#include "powergp/likelihood.hpp"
#include "powergp/math.hpp"
#include "powergp/svgp.hpp"
#include "powergp/warped.hpp"

namespace powergp {

/// NMSE = 100 / (N sigma^2) * sqrt(sum (y - y_hat)^2), with sigma^2 the
/// biased sample variance of y. Implemented exactly as printed in its
/// source, dimensional quirk included.
inline double nmse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
    if (y.size() != y_hat.size()) {
        throw ValidationError("metrics", "nmse inputs must be equally sized");
    }
    if (y.size() < 2) {
        throw ValidationError("metrics", "nmse needs at least two points");
    }
    const double n = static_cast<double>(y.size());
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / n;
    if (!(var > 0.0)) {
        throw DegenerateVarianceError("metrics", "nmse undefined for constant targets");
    }
    const double sse = (y - y_hat).squaredNorm();
    return 100.0 / (n * var) * std::sqrt(sse);
}

/// One row of the results table.
struct EvaluationReport {
    std::string model_name;
    double nmse = 0.0;
    double jll = 0.0;
    std::string space = "original";  // original | warped
    long n_test = 0;
    double clipped_fraction = 0.0;
};

/// Sum of Gaussian log predictive densities, pairwise-summed so additivity
/// over the two floor(n/2) partitions is exact.
inline double jll_gaussian(const Eigen::VectorXd& means, const Eigen::VectorXd& variances,
                           const Eigen::VectorXd& y) {
    if (means.size() != y.size() || variances.size() != y.size() || y.size() < 1) {
        throw ValidationError("metrics", "jll inputs must be equally sized and non-empty");
    }
    Eigen::VectorXd terms(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!(variances[i] > 0.0)) {
            throw ValidationError("metrics", "jll requires strictly positive variances");
        }
        const double r = y[i] - means[i];
        terms[i] = -0.5 * (kLogTwoPi + std::log(variances[i])) - 0.5 * r * r / variances[i];
    }
    return pairwise_sum(terms);
}

/// JLL of a sparse Gaussian-likelihood model: posterior marginals with the
/// observation noise included.
inline double jll_standard(const VariationalState& state, const LikelihoodSpec& lik,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const JitterSchedule& jitter = {}) {
    const auto* g = std::get_if<GaussianLikelihood>(&lik.node);
    if (g == nullptr) {
        throw ValidationError("metrics", "jll_standard requires a Gaussian likelihood");
    }
    const Marginals m = latent_marginals(state, 0, x, jitter);
    Eigen::VectorXd variances = m.variance.array() + g->noise_variance;
    return jll_gaussian(m.mean, variances, y);
}

/// JLL under the bounded predictive densities. Support violations are
/// itemized by index.
inline double jll_hbp(const std::vector<BetaPrediction>& preds, const Eigen::VectorXd& y) {
    if (static_cast<Eigen::Index>(preds.size()) != y.size() || y.size() < 1) {
        throw ValidationError("metrics", "jll inputs must be equally sized and non-empty");
    }
    std::vector<long> bad;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0 && y[i] < 1.0)) bad.push_back(static_cast<long>(i));
    }
    if (!bad.empty()) {
        throw SupportError("metrics",
                           std::to_string(bad.size()) + " target(s) outside (0, 1)",
                           std::move(bad));
    }
    Eigen::VectorXd terms(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        terms[i] = hbp_log_density(preds[static_cast<std::size_t>(i)], y[i]);
    }
    return pairwise_sum(terms);
}

struct WarpedJll {
    double warped_space = 0.0;        // Gaussian JLL on the warped targets
    double jacobian_corrected = 0.0;  // + sum log |d logit / dp| at the targets
    long clipped = 0;                 // targets clipped into the open interval
};

/// Warped-model JLL, evaluated in the warped space (moment-matched Gaussian
/// predictive). The Jacobian-corrected variant adds the change-of-variables
/// term for comparison against original-space values; which convention a
/// given external table uses is not asserted here.
inline WarpedJll jll_warped(const WarpedModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& p, const JitterSchedule& jitter = {}) {
    WarpedJll out;
    const Eigen::VectorXd w = logit_warp(p, model.warp, &out.clipped);
    const auto preds = warped_predict(model, x, jitter);
    Eigen::VectorXd means(x.size());
    Eigen::VectorXd variances(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        means[i] = preds[static_cast<std::size_t>(i)].warped_mean;
        const double sd = preds[static_cast<std::size_t>(i)].warped_sd;
        variances[i] = std::max(sd * sd, 1e-300);
    }
    out.warped_space = jll_gaussian(means, variances, w);
    Eigen::VectorXd jac(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double c = std::min(std::max(p[i], model.warp.epsilon), 1.0 - model.warp.epsilon);
        jac[i] = -std::log(c) - std::log1p(-c);  // log |d logit/dp| = -log(p(1-p))
    }
    out.jacobian_corrected = out.warped_space + pairwise_sum(jac);
    return out;
}

}  // namespace powergp
