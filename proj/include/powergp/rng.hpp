#pragma once

#include <cmath>
#include <cstdint>

namespace powergp {

/// splitmix64: the base generator for everything random in the library.
/// All streams are derived from explicit seeds; nothing reads system entropy.
struct SplitMix64 {
    std::uint64_t state;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

/// Deterministic random stream with the samplers the library needs.
/// Counter-based sub-streams (`for_point`) make per-point sampling identical
/// whether points are processed serially or in parallel.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_{seed} {
        // decorrelate trivially related seeds
        gen_.next();
    }

    static Rng for_point(std::uint64_t seed, std::uint64_t point_index) {
        SplitMix64 mixer{seed ^ (0x9e3779b97f4a7c15ULL * (point_index + 1))};
        return Rng(mixer.next());
    }

    /// Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(gen_.next() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (pairwise cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925 * u2;
        cached_ = r * std::sin(t);
        has_cached_ = true;
        return r * std::cos(t);
    }

    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(gen_.next()) * n) >> 64);
    }

    /// log of a Gamma(shape, 1) draw. Working in log space keeps tiny shapes
    /// (heavy mass near zero) representable.
    double log_gamma_variate(double shape) {
        if (shape < 1.0) {
            // boost: X ~ Gamma(a) equals X' * U^(1/a) with X' ~ Gamma(a + 1)
            const double u = uniform();
            return log_gamma_variate(shape + 1.0) + std::log(u) / shape;
        }
        // Marsaglia-Tsang squeeze
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
        }
    }

    /// Beta(a, b) draw, strictly inside (0, 1).
    double beta(double a, double b) {
        const double la = log_gamma_variate(a);
        const double lb = log_gamma_variate(b);
        // y = Ga / (Ga + Gb) = sigmoid(la - lb), saturation-safe
        const double diff = la - lb;
        double y = diff >= 0.0 ? 1.0 / (1.0 + std::exp(-diff))
                               : std::exp(diff) / (1.0 + std::exp(diff));
        if (y >= 1.0) y = 1.0 - 1e-16;
        if (y <= 0.0) y = 1e-300;
        return y;
    }

private:
    SplitMix64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace powergp
