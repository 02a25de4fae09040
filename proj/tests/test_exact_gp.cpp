#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "powergp/exact_gp.hpp"
#include "powergp/rng.hpp"

using namespace powergp;

namespace {

Eigen::VectorXd single(double v) {
    Eigen::VectorXd x(1);
    x << v;
    return x;
}

// draw from the GP prior with the given kernel and noise
Eigen::VectorXd sample_gp(Rng& rng, const KernelSpec& kernel, const Eigen::VectorXd& x,
                          double noise_variance) {
    Eigen::MatrixXd k = kernel_matrix(kernel, x, x);
    k.diagonal().array() += 1e-10;
    const Eigen::MatrixXd chol = robust_cholesky(k, {}, "test").L;
    Eigen::VectorXd z(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) z[i] = rng.normal();
    Eigen::VectorXd f = chol * z;
    for (Eigen::Index i = 0; i < x.size(); ++i) f[i] += std::sqrt(noise_variance) * rng.normal();
    return f;
}

}  // namespace

TEST_CASE("nlml worked examples") {
    // single observation, unit prior variance, no noise
    ExactGPModel zero(squared_exponential(1.0, 1.0), 0.0, single(0.0), single(0.0));
    CHECK(zero.nlml() == Catch::Approx(0.5 * kLogTwoPi).epsilon(1e-12));

    ExactGPModel one(squared_exponential(1.0, 1.0), 0.0, single(0.0), single(1.0));
    CHECK(one.nlml() == Catch::Approx(0.5 * kLogTwoPi + 0.5).epsilon(1e-12));

    // all-zero targets leave only the determinant and constant terms
    Rng rng(5);
    Eigen::VectorXd x(12);
    for (int i = 0; i < 12; ++i) x[i] = rng.uniform() * 2.0;
    ExactGPModel flat(matern32(1.4, 0.6), 0.2, x, Eigen::VectorXd::Zero(12));
    Eigen::MatrixXd k = kernel_matrix(matern32(1.4, 0.6), x, x);
    k.diagonal().array() += 0.2;
    const double expected =
        0.5 * std::log(k.determinant()) + 0.5 * 12.0 * kLogTwoPi;
    CHECK(flat.nlml() == Catch::Approx(expected).epsilon(1e-10));
}

TEST_CASE("cached factor reconstructs the covariance") {
    Rng rng(7);
    Eigen::VectorXd x(20);
    for (int i = 0; i < 20; ++i) x[i] = 3.0 * rng.uniform();
    const auto kernel = kernel_sum({matern32(1.0, 0.4), linear_kernel(0.2)});
    const Eigen::VectorXd y = sample_gp(rng, kernel, x, 0.05);
    ExactGPModel model(kernel, 0.05, x, y);
    Eigen::MatrixXd k = kernel_matrix(kernel, x, x);
    k.diagonal().array() += 0.05;
    // verify via the quadratic form the factor is used for
    const Eigen::VectorXd alpha = k.ldlt().solve(y);
    const double direct = 0.5 * y.dot(alpha) +
                          0.5 * std::log(k.determinant()) + 0.5 * 20.0 * kLogTwoPi;
    CHECK(model.nlml() == Catch::Approx(direct).epsilon(1e-9));
}

TEST_CASE("posterior interpolates noiseless observations") {
    Rng rng(11);
    Eigen::VectorXd x(8);
    for (int i = 0; i < 8; ++i) x[i] = static_cast<double>(i) / 4.0;
    const Eigen::VectorXd y = sample_gp(rng, squared_exponential(1.0, 0.8), x, 0.0);
    ExactGPModel model(squared_exponential(1.0, 0.8), 0.0, x, y);
    const auto post = model.posterior(x, false);
    CHECK((post.mean - y).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(post.variance.maxCoeff() < 1e-8);
}

TEST_CASE("posterior recovers the prior far from the data") {
    ExactGPModel model(squared_exponential(1.7, 0.3), 0.1, single(0.0), single(0.9));
    const auto post = model.posterior(single(50.0), false);
    CHECK(std::abs(post.mean[0]) < 1e-10);
    CHECK(post.variance[0] == Catch::Approx(1.7).epsilon(1e-10));
    const auto noisy = model.posterior(single(50.0), true);
    CHECK(noisy.variance[0] == Catch::Approx(1.8).epsilon(1e-10));
}

TEST_CASE("one-point conditioning closed form") {
    const double y0 = -0.73;
    ExactGPModel model(squared_exponential(1.0, 1.0), 0.0, single(0.0), single(y0));
    const auto post = model.posterior(single(1.0), false);
    CHECK(post.mean[0] == Catch::Approx(std::exp(-0.5) * y0).epsilon(1e-12));
    CHECK(post.variance[0] == Catch::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("posterior variance never exceeds the prior variance") {
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 2 + static_cast<int>(rng.uniform_index(20));
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x[i] = 4.0 * rng.uniform() - 2.0;
        const auto kernel = kernel_sum({matern32(0.8, 0.5), linear_kernel(0.3)});
        const double noise = 0.01 + rng.uniform();
        const Eigen::VectorXd y = sample_gp(rng, kernel, x, noise);
        ExactGPModel model(kernel, noise, x, y);
        Eigen::VectorXd xs(25);
        for (int i = 0; i < 25; ++i) xs[i] = 5.0 * rng.uniform() - 2.5;
        for (bool include_noise : {false, true}) {
            const auto post = model.posterior(xs, include_noise);
            const Eigen::VectorXd prior =
                kernel_diag(kernel, xs).array() + (include_noise ? noise : 0.0);
            CHECK((post.variance.array() <= prior.array() + 1e-10).all());
        }
    }
}

TEST_CASE("nlml gradient matches finite differences") {
    Rng rng(17);
    for (int rep = 0; rep < 8; ++rep) {
        const int n = 5 + static_cast<int>(rng.uniform_index(26));
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x[i] = 3.0 * rng.uniform();
        const auto kernel = kernel_sum({matern32(1.2, 0.5), linear_kernel(0.2)});
        const Eigen::VectorXd y = sample_gp(rng, kernel, x, 0.1);
        ExactGPModel model(kernel, 0.1, x, y);

        Eigen::VectorXd grad;
        model.nlml_grad(grad);
        const auto eval = [&](const Eigen::VectorXd& h) {
            return model.with_log_hyperparameters(h).nlml();
        };
        const Eigen::VectorXd fd =
            oracles::finite_difference(eval, model.log_hyperparameters(), 1e-5);
        for (Eigen::Index i = 0; i < grad.size(); ++i) {
            CAPTURE(rep, i);
            CHECK(oracles::relative_error(grad[i], fd[i]) < 1e-4);
        }
    }
}

TEST_CASE("jitter perturbs nlml only at O(delta)") {
    Rng rng(19);
    const int n = 30;
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = 2.0 * rng.uniform();
    const auto kernel = matern32(1.0, 0.5);
    const Eigen::VectorXd y = sample_gp(rng, kernel, x, 0.05);
    const double delta = 1e-8;
    ExactGPModel base(kernel, 0.05, x, y);
    ExactGPModel shifted(kernel, 0.05 + delta, x, y);
    CHECK(std::abs(shifted.nlml() - base.nlml()) < 100.0 * delta * n);
}

TEST_CASE("constructor guards") {
    CHECK_THROWS_AS(ExactGPModel(matern32(1.0, 1.0), 0.1, single(0.0), Eigen::VectorXd::Zero(2)),
                    ValidationError);
    CHECK_THROWS_AS(ExactGPModel(matern32(1.0, 1.0), -0.1, single(0.0), single(0.0)),
                    ValidationError);
    CHECK_THROWS_AS(
        ExactGPModel(matern32(1.0, 1.0), 0.1, Eigen::VectorXd::Zero(0), Eigen::VectorXd::Zero(0)),
        ValidationError);
}

TEST_CASE("centering factory restores the target mean at prediction") {
    Eigen::VectorXd x(3);
    x << 0.0, 1.0, 2.0;
    Eigen::VectorXd y(3);
    y << 4.0, 5.0, 6.0;
    const auto model =
        ExactGPModel::with_centered_targets(squared_exponential(1.0, 1.0), 1e-6, x, y);
    CHECK(model.target_offset() == Catch::Approx(5.0));
    const auto post = model.posterior(x, false);
    CHECK((post.mean - y).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("fit recovers prior-generated hyperparameters within half a log unit") {
    Rng rng(23);
    const int n = 200;
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = 2.0 * rng.uniform();
    const auto true_kernel = squared_exponential(1.5, 0.4);
    const double true_noise = 0.01;
    const Eigen::VectorXd y = sample_gp(rng, true_kernel, x, true_noise);

    ExactGPModel start(squared_exponential(0.5, 1.0), 0.1, x, y);
    const auto fit = fit_exact(start);
    CHECK(fit.final_nlml <= fit.initial_nlml);

    Eigen::VectorXd truth(3);
    truth << std::log(1.5), std::log(0.4), std::log(true_noise);
    const Eigen::VectorXd got = fit.model.log_hyperparameters();
    for (int i = 0; i < 3; ++i) {
        CAPTURE(i, got[i], truth[i]);
        CHECK(std::abs(got[i] - truth[i]) < 0.5);
    }
}

TEST_CASE("degenerate all-zero targets drive the signal variance down") {
    Rng rng(29);
    Eigen::VectorXd x(40);
    for (int i = 0; i < 40; ++i) x[i] = rng.uniform();
    ExactGPModel start(squared_exponential(1.0, 0.5), 0.05, x, Eigen::VectorXd::Zero(40));
    const auto fit = fit_exact(start);
    CHECK(fit.final_nlml <= fit.initial_nlml);
    const Eigen::VectorXd h = fit.model.log_hyperparameters();
    CHECK(h[0] < std::log(1.0) - 3.0);  // signal variance pushed far down
}

TEST_CASE("refitting from the fitted point is a fixed point") {
    Rng rng(31);
    const int n = 120;
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = 2.0 * rng.uniform();
    const Eigen::VectorXd y = sample_gp(rng, matern32(1.0, 0.5), x, 0.05);
    ExactGPModel start(matern32(0.7, 0.9), 0.02, x, y);
    const auto first = fit_exact(start);
    const auto second = fit_exact(first.model);
    CHECK(first.final_nlml - second.final_nlml < 1e-6);
}
