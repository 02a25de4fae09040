#pragma once

#include <cmath>
#include <span>
#include <variant>

#include "powergp/errors.hpp"
#include "powergp/math.hpp"

namespace powergp {

/// Latent values are clamped to this magnitude before exponentiation.
inline constexpr double kLatentClamp = 30.0;

struct GaussianLikelihood {
    double noise_variance;
};

/// Gaussian observation with log-variance driven by a second latent GP.
struct HeteroGaussianLikelihood {};

/// Beta observation; two latent GPs map through exp to the shape parameters.
struct BetaLikelihood {};

struct LikelihoodSpec {
    std::variant<GaussianLikelihood, HeteroGaussianLikelihood, BetaLikelihood> node;
};

inline LikelihoodSpec gaussian_likelihood(double noise_variance) {
    if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) {
        throw ValidationError("likelihoods", "Gaussian noise variance must be finite and > 0");
    }
    return {GaussianLikelihood{noise_variance}};
}

inline LikelihoodSpec hetero_gaussian_likelihood() { return {HeteroGaussianLikelihood{}}; }

inline LikelihoodSpec beta_likelihood() { return {BetaLikelihood{}}; }

/// Number of latent GPs the observation model consumes.
inline int latent_count(const LikelihoodSpec& lik) {
    return std::visit(
        [](const auto& l) -> int {
            using T = std::decay_t<decltype(l)>;
            return std::is_same_v<T, GaussianLikelihood> ? 1 : 2;
        },
        lik.node);
}

inline bool in_support(const LikelihoodSpec& lik, double y) {
    if (!std::isfinite(y)) return false;
    return std::holds_alternative<BetaLikelihood>(lik.node) ? (y > 0.0 && y < 1.0) : true;
}

namespace detail {

inline double clamp_latent(double f) {
    return f > kLatentClamp ? kLatentClamp : (f < -kLatentClamp ? -kLatentClamp : f);
}

inline void check_latents(const LikelihoodSpec& lik, std::span<const double> latents) {
    if (static_cast<int>(latents.size()) != latent_count(lik)) {
        throw ValidationError("likelihoods", "latent vector length does not match latent_count");
    }
    for (double f : latents) {
        if (!std::isfinite(f)) throw ValidationError("likelihoods", "non-finite latent value");
    }
}

}  // namespace detail

/// log p(y | latents). Beta requires y in (0, 1).
inline double log_density(const LikelihoodSpec& lik, double y, std::span<const double> latents) {
    detail::check_latents(lik, latents);
    return std::visit(
        [&](const auto& l) -> double {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, GaussianLikelihood>) {
                const double r = y - latents[0];
                return -0.5 * (kLogTwoPi + std::log(l.noise_variance)) -
                       0.5 * r * r / l.noise_variance;
            } else if constexpr (std::is_same_v<T, HeteroGaussianLikelihood>) {
                const double f2 = detail::clamp_latent(latents[1]);
                const double r = y - latents[0];
                return -0.5 * (kLogTwoPi + f2) - 0.5 * r * r * std::exp(-f2);
            } else {
                if (!(y > 0.0 && y < 1.0)) {
                    throw SupportError("likelihoods", "Beta likelihood requires y in (0, 1)");
                }
                const double alpha = std::exp(detail::clamp_latent(latents[0]));
                const double beta = std::exp(detail::clamp_latent(latents[1]));
                const double log_norm = detail::log_gamma_fast(alpha) +
                                        detail::log_gamma_fast(beta) -
                                        detail::log_gamma_fast(alpha + beta);
                return (alpha - 1.0) * std::log(y) + (beta - 1.0) * std::log1p(-y) - log_norm;
            }
        },
        lik.node);
}

/// log_density together with its partial derivatives w.r.t. each latent
/// (zero beyond the clamp boundary). These adjoints feed the ELBO chain.
inline double log_density_grad(const LikelihoodSpec& lik, double y,
                               std::span<const double> latents, std::span<double> dlatents) {
    detail::check_latents(lik, latents);
    return std::visit(
        [&](const auto& l) -> double {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, GaussianLikelihood>) {
                const double r = y - latents[0];
                dlatents[0] = r / l.noise_variance;
                return -0.5 * (kLogTwoPi + std::log(l.noise_variance)) -
                       0.5 * r * r / l.noise_variance;
            } else if constexpr (std::is_same_v<T, HeteroGaussianLikelihood>) {
                const bool clamped = std::abs(latents[1]) > kLatentClamp;
                const double f2 = detail::clamp_latent(latents[1]);
                const double prec = std::exp(-f2);
                const double r = y - latents[0];
                dlatents[0] = r * prec;
                dlatents[1] = clamped ? 0.0 : -0.5 + 0.5 * r * r * prec;
                return -0.5 * (kLogTwoPi + f2) - 0.5 * r * r * prec;
            } else {
                if (!(y > 0.0 && y < 1.0)) {
                    throw SupportError("likelihoods", "Beta likelihood requires y in (0, 1)");
                }
                const bool c1 = std::abs(latents[0]) > kLatentClamp;
                const bool c2 = std::abs(latents[1]) > kLatentClamp;
                const double alpha = std::exp(detail::clamp_latent(latents[0]));
                const double beta = std::exp(detail::clamp_latent(latents[1]));
                const double ly = std::log(y);
                const double l1y = std::log1p(-y);
                const double psi_ab = digamma(alpha + beta);
                dlatents[0] = c1 ? 0.0 : alpha * (ly - digamma(alpha) + psi_ab);
                dlatents[1] = c2 ? 0.0 : beta * (l1y - digamma(beta) + psi_ab);
                const double log_norm = detail::log_gamma_fast(alpha) +
                                        detail::log_gamma_fast(beta) -
                                        detail::log_gamma_fast(alpha + beta);
                return (alpha - 1.0) * ly + (beta - 1.0) * l1y - log_norm;
            }
        },
        lik.node);
}

}  // namespace powergp
