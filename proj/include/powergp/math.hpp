#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>

#include "powergp/errors.hpp"

namespace powergp {

inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;

namespace detail {

// Lanczos g=7, 9 coefficients (Godfrey's set), evaluated in long double.
inline long double lanczos_sum(long double z) {
    static constexpr long double coef[9] = {
        0.99999999999980993L,     676.5203681218851L,     -1259.1392167224028L,
        771.32342877765313L,      -176.61502916214059L,   12.507343278686905L,
        -0.13857109526572012L,    9.9843695780195716e-6L, 1.5056327351493116e-7L};
    long double a = coef[0];
    for (int i = 1; i < 9; ++i) a += coef[i] / (z + static_cast<long double>(i));
    return a;
}

// Stirling series correction sum(B_2n / ((2n)(2n-1) z^(2n-1))), 8 terms.
inline long double stirling_correction(long double z) {
    static constexpr long double c[8] = {
        1.0L / 12.0L,      -1.0L / 360.0L,       1.0L / 1260.0L, -1.0L / 1680.0L,
        1.0L / 1188.0L,    -691.0L / 360360.0L,  1.0L / 156.0L,  -3617.0L / 122400.0L};
    const long double inv = 1.0L / z;
    const long double inv2 = inv * inv;
    long double p = inv;
    long double s = 0.0L;
    for (int i = 0; i < 8; ++i) {
        s += c[i] * p;
        p *= inv2;
    }
    return s;
}

inline long double log_gamma_ld(long double x) {
    static constexpr long double kPi = 3.141592653589793238462643383279502884L;
    static constexpr long double kLogSqrt2Pi = 0.918938533204672741780329736405617639L;
    if (x < 0.5L) {
        // reflection: log Gamma(x) = log(pi / sin(pi x)) - log Gamma(1 - x)
        return std::log(kPi / std::sin(kPi * x)) - log_gamma_ld(1.0L - x);
    }
    if (x >= 13.0L) {
        return (x - 0.5L) * std::log(x) - x + kLogSqrt2Pi + stirling_correction(x);
    }
    const long double z = x - 1.0L;
    const long double t = z + 7.5L;
    return kLogSqrt2Pi + (z + 0.5L) * std::log(t) - t + std::log(lanczos_sum(z));
}

// Same scheme at plain double precision; used in likelihood hot loops where
// ~1e-13 accuracy suffices.
inline double log_gamma_fast(double x) {
    static constexpr double kPi = 3.14159265358979323846;
    if (x < 0.5) {
        return std::log(kPi / std::sin(kPi * x)) - log_gamma_fast(1.0 - x);
    }
    if (x >= 13.0) {
        static constexpr double c[6] = {1.0 / 12.0,  -1.0 / 360.0,       1.0 / 1260.0,
                                        -1.0 / 1680.0, 1.0 / 1188.0, -691.0 / 360360.0};
        const double inv = 1.0 / x;
        const double inv2 = inv * inv;
        double p = inv;
        double s = 0.0;
        for (int i = 0; i < 6; ++i) {
            s += c[i] * p;
            p *= inv2;
        }
        return (x - 0.5) * std::log(x) - x + 0.91893853320467274178 + s;
    }
    static constexpr double coef[9] = {
        0.99999999999980993,   676.5203681218851,      -1259.1392167224028,
        771.32342877765313,    -176.61502916214059,    12.507343278686905,
        -0.13857109526572012,  9.9843695780195716e-6,  1.5056327351493116e-7};
    const double z = x - 1.0;
    double a = coef[0];
    for (int i = 1; i < 9; ++i) a += coef[i] / (z + i);
    const double t = z + 7.5;
    return 0.91893853320467274178 + (z + 0.5) * std::log(t) - t + std::log(a);
}

}  // namespace detail

/// log Gamma(x) for x > 0. Lanczos (g=7) with reflection below 0.5 and a
/// Stirling asymptotic branch above 13, evaluated in extended precision.
inline double log_gamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw ValidationError("math", "log_gamma requires finite x > 0");
    }
    return static_cast<double>(detail::log_gamma_ld(static_cast<long double>(x)));
}

/// log B(alpha, beta) = log Gamma(a) + log Gamma(b) - log Gamma(a+b),
/// accumulated in extended precision. Domain: [1e-6, 1e6] per argument.
inline double log_beta_fn(double alpha, double beta) {
    if (!(alpha >= 1e-6 && alpha <= 1e6) || !(beta >= 1e-6 && beta <= 1e6)) {
        throw ValidationError("likelihoods", "log_beta_fn arguments must lie in [1e-6, 1e6]");
    }
    const long double a = alpha, b = beta;
    return static_cast<double>(detail::log_gamma_ld(a) + detail::log_gamma_ld(b) -
                               detail::log_gamma_ld(a + b));
}

/// digamma(x) for x > 0: upward recurrence to x >= 10, then the asymptotic
/// series log x - 1/(2x) - sum(B_2n / (2n x^(2n))).
inline double digamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw ValidationError("math", "digamma requires finite x > 0");
    }
    static constexpr double c[7] = {1.0 / 12.0,  -1.0 / 120.0,     1.0 / 252.0, -1.0 / 240.0,
                                    1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0};
    double z = x;
    double acc = 0.0;
    while (z < 10.0) {
        acc -= 1.0 / z;
        z += 1.0;
    }
    const double inv = 1.0 / z;
    const double inv2 = inv * inv;
    double series = 0.0;
    double p = inv2;
    for (int n = 0; n < 7; ++n) {
        series += c[n] * p;
        p *= inv2;
    }
    return acc + std::log(z) - 0.5 * inv - series;
}

/// Gauss-Hermite rule normalized for standard-normal expectations:
/// E[f(Z)] ~ sum_i w_i f(z_i), weights sum to 1, exact for polynomials of
/// degree <= 2H-1. Nodes ascending, symmetrized about zero.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int h) {
    if (h < 1 || h > 100) {
        throw ValidationError("svgp", "gauss_hermite order must lie in [1, 100]");
    }
    if (h == 1) {
        Eigen::VectorXd n(1), w(1);
        n[0] = 0.0;
        w[0] = 1.0;
        return {n, w};
    }
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
    // recurrence He_{n+1} = x He_n - n He_{n-1} (zero diagonal, off-diagonal
    // sqrt(k)) seeds the nodes; Newton polishing in extended precision and
    // the cancellation-free weight formula w = 1 / sum_k He_k(x)^2 / k!
    // keep the tiny extreme-node weights accurate in a relative sense.
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd sub(h - 1);
    for (int k = 1; k < h; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    Eigen::VectorXd nodes = es.eigenvalues();
    Eigen::VectorXd weights(h);
    for (int i = 0; i < h; ++i) {
        long double x = nodes[i];
        long double he_prev = 0.0L;  // He_{n-1}(x) after the loop
        long double he = 0.0L;       // He_n(x)
        for (int newton = 0; newton < 3; ++newton) {
            he_prev = 1.0L;
            he = x;
            for (int k = 1; k < h; ++k) {
                const long double next = x * he - static_cast<long double>(k) * he_prev;
                he_prev = he;
                he = next;
            }
            const long double slope = static_cast<long double>(h) * he_prev;
            if (slope != 0.0L) x -= he / slope;
        }
        long double norm_sum = 1.0L;  // He_0^2 / 0!
        long double p_prev = 1.0L;
        long double p = x;
        long double factorial = 1.0L;
        for (int k = 1; k < h; ++k) {
            factorial *= static_cast<long double>(k);
            norm_sum += p * p / factorial;
            const long double next = x * p - static_cast<long double>(k) * p_prev;
            p_prev = p;
            p = next;
        }
        nodes[i] = static_cast<double>(x);
        weights[i] = static_cast<double>(1.0L / norm_sum);
    }
    // enforce the exact +/- symmetry of the rule
    for (int i = 0, j = h - 1; i < j; ++i, --j) {
        const double n0 = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -n0;
        nodes[j] = n0;
        const double w0 = 0.5 * (weights[i] + weights[j]);
        weights[i] = w0;
        weights[j] = w0;
    }
    if (h % 2 == 1) nodes[h / 2] = 0.0;
    weights /= weights.sum();
    return {nodes, weights};
}

/// Deterministic pairwise summation: splits at floor(n/2) all the way down,
/// so summing the two floor(n/2) halves separately and adding reproduces the
/// full sum bit for bit at every size.
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    if (n == 1) return v[0];
    if (n == 2) return v[0] + v[1];
    const std::size_t m = n / 2;
    return pairwise_sum(v.subspan(0, m)) + pairwise_sum(v.subspan(m));
}

inline double pairwise_sum(const Eigen::VectorXd& v) {
    return pairwise_sum(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

}  // namespace powergp
