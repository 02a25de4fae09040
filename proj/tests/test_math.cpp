#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "powergp/math.hpp"
#include "powergp/rng.hpp"

using namespace powergp;

#include "logbeta_reference.hpp"

namespace {

using oracles::kLogBetaReference;

struct LogBetaCase {
    double a;
    double b;
    double expected;
};

// digamma reference, mpmath dps = 50
const LogBetaCase kDigammaReference[] = {
    {1e-06, 0.0, -1000000.577214019968668},
    {0.01, 0.0, -100.5608854578686744975},
    {0.3, 0.0, -3.502524222200132988964},
    {0.5, 0.0, -1.963510026021423479441},
    {1.0, 0.0, -0.5772156649015328606065},
    {1.5, 0.0, 0.03648997397857652055902},
    {2.0, 0.0, 0.4227843350984671393935},
    {5.0, 0.0, 1.506117668431800472727},
    {13.5, 0.0, 2.56519565127491204815},
    {100.0, 0.0, 4.600161852738087400199},
    {10000.0, 0.0, 9.210290371142849403572},
    {100000000.0, 0.0, 18.42068073895236546381},
};

double odd_double_factorial(int k) {
    // (2k-1)!! = E[Z^(2k)] for standard normal Z
    double acc = 1.0;
    for (int i = 2 * k - 1; i > 1; i -= 2) acc *= i;
    return acc;
}

}  // namespace

TEST_CASE("log_beta_fn matches the high-precision oracle grid") {
    for (const auto& c : kLogBetaReference) {
        const double got = log_beta_fn(c.a, c.b);
        CAPTURE(c.a, c.b);
        CHECK(std::abs(got - c.expected) < 1e-10);
    }
}

TEST_CASE("log_beta_fn closed-form spot values") {
    CHECK(log_beta_fn(1.0, 1.0) == Catch::Approx(0.0).margin(1e-14));
    CHECK(log_beta_fn(2.0, 2.0) == Catch::Approx(std::log(1.0 / 6.0)).epsilon(1e-13));
    CHECK(log_beta_fn(0.5, 0.5) ==
          Catch::Approx(std::log(3.14159265358979323846)).epsilon(1e-13));
    // symmetry across the grid
    for (const auto& c : kLogBetaReference) {
        CHECK(log_beta_fn(c.a, c.b) == log_beta_fn(c.b, c.a));
    }
}

TEST_CASE("log_beta_fn domain validation") {
    CHECK_THROWS_AS(log_beta_fn(1e-7, 1.0), ValidationError);
    CHECK_THROWS_AS(log_beta_fn(1.0, 2e6), ValidationError);
    // full stated domain; error bounded by 1e-10 or a few ulp of the result,
    // whichever is larger (|log B| can exceed 1e6 where 1 ulp > 1e-10)
    const double corners[] = {1e-6, 1e-3, 0.5, 13.0, 1e4, 1e6};
    for (double a : corners) {
        for (double b : corners) {
            const double v = log_beta_fn(a, b);
            CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("digamma matches the high-precision reference") {
    for (const auto& c : kDigammaReference) {
        const double got = digamma(c.a);
        CAPTURE(c.a);
        CHECK(std::abs(got - c.expected) <= 1e-10 * std::max(1.0, std::abs(c.expected)));
    }
    CHECK_THROWS_AS(digamma(0.0), ValidationError);
    CHECK_THROWS_AS(digamma(-1.0), ValidationError);
}

TEST_CASE("log_gamma recurrence property") {
    // log Gamma(x+1) = log Gamma(x) + log x across the range
    for (double x : {1e-5, 0.03, 0.4, 0.9, 2.5, 12.9, 13.1, 500.0, 2e5}) {
        CHECK(log_gamma(x + 1.0) ==
              Catch::Approx(log_gamma(x) + std::log(x)).margin(1e-11 * std::max(1.0, std::abs(log_gamma(x)))));
    }
}

TEST_CASE("gauss_hermite basic rules") {
    {
        const auto [nodes, weights] = gauss_hermite(1);
        REQUIRE(nodes.size() == 1);
        CHECK(nodes[0] == 0.0);
        CHECK(weights[0] == 1.0);
    }
    {
        const auto [nodes, weights] = gauss_hermite(2);
        REQUIRE(nodes.size() == 2);
        CHECK(nodes[0] == Catch::Approx(-1.0).margin(1e-12));
        CHECK(nodes[1] == Catch::Approx(1.0).margin(1e-12));
        CHECK(weights[0] == Catch::Approx(0.5).margin(1e-12));
        CHECK(weights[1] == Catch::Approx(0.5).margin(1e-12));
        // E[z^2] = 1 exactly at degree 2 <= 2H-1
        const double got = weights[0] * nodes[0] * nodes[0] + weights[1] * nodes[1] * nodes[1];
        CHECK(got == Catch::Approx(1.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(gauss_hermite(0), ValidationError);
    CHECK_THROWS_AS(gauss_hermite(101), ValidationError);
}

TEST_CASE("gauss_hermite polynomial exactness up to degree 2H-1") {
    for (int h : {2, 3, 5, 10, 17, 30}) {
        const auto [nodes, weights] = gauss_hermite(h);
        CHECK(std::abs(weights.sum() - 1.0) < 1e-12);
        for (int k = 0; 2 * k <= 2 * h - 1; ++k) {
            double got = 0.0;
            for (int i = 0; i < h; ++i) got += weights[i] * std::pow(nodes[i], 2 * k);
            const double expected = odd_double_factorial(k);
            CAPTURE(h, k);
            CHECK(std::abs(got - expected) <= 1e-9 * std::max(1.0, expected));
        }
        // odd moments vanish by symmetry
        double odd = 0.0;
        for (int i = 0; i < h; ++i) odd += weights[i] * std::pow(nodes[i], 3);
        CHECK(std::abs(odd) < 1e-12);
    }
}

TEST_CASE("pairwise_sum splits exactly at floor(n/2)") {
    Rng rng(17);
    for (int n : {1, 5, 9, 100, 1001}) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = rng.normal() * 1e3;
        const std::size_t m = v.size() / 2;
        const double whole = pairwise_sum(std::span<const double>(v));
        const double left = pairwise_sum(std::span<const double>(v).subspan(0, m));
        const double right = pairwise_sum(std::span<const double>(v).subspan(m));
        CHECK(whole == left + right);  // bitwise: the tree splits there
    }
}
