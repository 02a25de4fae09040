#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "powergp/metrics.hpp"
#include "powergp/rng.hpp"

using namespace powergp;

TEST_CASE("nmse worked examples") {
    Eigen::VectorXd y(2);
    y << 0.0, 1.0;
    CHECK(nmse(y, y) == 0.0);

    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(2);
    CHECK(nmse(y, zeros) == Catch::Approx(200.0).epsilon(1e-12));

    Eigen::VectorXd halves = Eigen::VectorXd::Constant(2, 0.5);
    CHECK(nmse(y, halves) == Catch::Approx(200.0 * std::sqrt(0.5)).epsilon(1e-12));
    CHECK(nmse(y, halves) == Catch::Approx(141.42).margin(0.01));
}

TEST_CASE("nmse validation") {
    Eigen::VectorXd y(2);
    y << 0.0, 1.0;
    CHECK_THROWS_AS(nmse(y, Eigen::VectorXd::Zero(3)), ValidationError);
    CHECK_THROWS_AS(nmse(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), ValidationError);
    CHECK_THROWS_AS(nmse(Eigen::VectorXd::Constant(5, 0.7), Eigen::VectorXd::Zero(5)),
                    DegenerateVarianceError);
}

TEST_CASE("nmse is invariant to jointly permuting the pairs") {
    Rng rng(3);
    const int n = 64;
    Eigen::VectorXd y(n);
    Eigen::VectorXd y_hat(n);
    for (int i = 0; i < n; ++i) {
        y[i] = rng.normal();
        y_hat[i] = y[i] + 0.1 * rng.normal();
    }
    const double base = nmse(y, y_hat);
    // a seeded shuffle applied to both vectors
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) {
        std::swap(order[static_cast<std::size_t>(i)],
                  order[rng.uniform_index(static_cast<std::uint64_t>(i + 1))]);
    }
    Eigen::VectorXd yp(n);
    Eigen::VectorXd yhp(n);
    for (int i = 0; i < n; ++i) {
        yp[i] = y[order[static_cast<std::size_t>(i)]];
        yhp[i] = y_hat[order[static_cast<std::size_t>(i)]];
    }
    CHECK(nmse(yp, yhp) == Catch::Approx(base).epsilon(1e-12));
}

TEST_CASE("Gaussian JLL worked examples and additivity") {
    Eigen::VectorXd mean1 = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd var1 = Eigen::VectorXd::Ones(1);
    Eigen::VectorXd y1 = Eigen::VectorXd::Zero(1);
    CHECK(jll_gaussian(mean1, var1, y1) == Catch::Approx(-0.91894).margin(1e-5));

    Eigen::VectorXd mean2 = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd var2 = Eigen::VectorXd::Ones(2);
    Eigen::VectorXd y2 = Eigen::VectorXd::Zero(2);
    CHECK(jll_gaussian(mean2, var2, y2) == Catch::Approx(-1.83788).margin(1e-5));

    // additivity over the floor(n/2) partition is exact in the fixed
    // accumulation order
    Rng rng(7);
    const int n = 1001;
    Eigen::VectorXd means(n);
    Eigen::VectorXd vars(n);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        means[i] = rng.normal();
        vars[i] = 0.1 + rng.uniform();
        y[i] = means[i] + rng.normal();
    }
    const int m = n / 2;
    const double whole = jll_gaussian(means, vars, y);
    const double left = jll_gaussian(means.head(m), vars.head(m), y.head(m));
    const double right = jll_gaussian(means.tail(n - m), vars.tail(n - m), y.tail(n - m));
    CHECK(whole == left + right);
}

TEST_CASE("uniform HBP predictions give zero JLL") {
    BetaPrediction uniform;
    uniform.alpha_star = 1.0;
    uniform.beta_star = 1.0;
    std::vector<BetaPrediction> preds(7, uniform);
    Eigen::VectorXd y(7);
    for (int i = 0; i < 7; ++i) y[i] = 0.1 + 0.1 * i;
    CHECK(jll_hbp(preds, y) == Catch::Approx(0.0).margin(1e-12));

    y[3] = 1.0;
    try {
        jll_hbp(preds, y);
        FAIL("expected SupportError");
    } catch (const SupportError& e) {
        REQUIRE(e.indices().size() == 1);
        CHECK(e.indices().front() == 3);
    }
}

TEST_CASE("true Beta density beats the moment-matched Gaussian in JLL") {
    // consistency with the bounded-model claim, checked on 50 seeded
    // replicates of a Beta generative process
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        const double a = 0.3 + 2.7 * rng.uniform();
        const double b = 0.3 + 2.7 * rng.uniform();
        const int n = 500;
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y[i] = rng.beta(a, b);

        BetaPrediction truth;
        truth.alpha_star = a;
        truth.beta_star = b;
        const double jll_beta = jll_hbp(std::vector<BetaPrediction>(n, truth), y);

        const double mean = a / (a + b);
        const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
        const double jll_gauss = jll_gaussian(Eigen::VectorXd::Constant(n, mean),
                                              Eigen::VectorXd::Constant(n, var), y);
        CAPTURE(seed, a, b);
        CHECK(jll_beta >= jll_gauss);
    }
}
