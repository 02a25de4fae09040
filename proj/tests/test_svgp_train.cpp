#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "powergp/exact_gp.hpp"
#include "powergp/rng.hpp"
#include "powergp/svgp.hpp"

using namespace powergp;

namespace {

Eigen::VectorXd sorted_uniform(Rng& rng, int n, double lo, double hi) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = lo + (hi - lo) * rng.uniform();
    std::sort(x.data(), x.data() + n);
    for (int i = 1; i < n; ++i) {
        if (x[i] <= x[i - 1]) x[i] = x[i - 1] + 1e-9;
    }
    return x;
}

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

TEST_CASE("zero iterations returns the state unchanged") {
    Rng rng(31);
    const Eigen::VectorXd x = sorted_uniform(rng, 40, 0.0, 1.0);
    const Eigen::VectorXd y = sample_gp(rng, matern32(1.0, 0.3), x, 0.05);
    const Eigen::VectorXd z = default_inducing_points(x, 8);
    VariationalState state = make_prior_state({matern32(1.0, 0.3)}, z);
    TrainConfig cfg;
    cfg.iterations = 0;
    cfg.minibatch_size = 16;
    const auto result = train_svgp(state, gaussian_likelihood(0.05), x, y, cfg);
    CHECK(result.trace.size() == 1);
    CHECK(result.trace.front().iteration == 0);
    CHECK(result.final_elbo == result.initial_elbo);
    CHECK((result.state.z - state.z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((result.state.latents[0].m - state.latents[0].m).cwiseAbs().maxCoeff() == 0.0);
    CHECK((result.state.latents[0].L - state.latents[0].L).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical seeds give bitwise-identical traces") {
    Rng rng(37);
    const Eigen::VectorXd x = sorted_uniform(rng, 120, 0.0, 1.0);
    const Eigen::VectorXd y = sample_gp(rng, matern32(1.0, 0.3), x, 0.05);
    const Eigen::VectorXd z = default_inducing_points(x, 10);

    TrainConfig cfg;
    cfg.iterations = 250;
    cfg.minibatch_size = 32;
    cfg.quadrature_points = 5;
    cfg.seed = 99;

    const auto run = [&]() {
        VariationalState state = make_prior_state({matern32(0.8, 0.4)}, z);
        return train_svgp(state, gaussian_likelihood(0.1), x, y, cfg);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.trace.size() == b.trace.size());
    CHECK(a.trace.size() == 3);  // iterations 0, 100, 200
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].iteration == b.trace[i].iteration);
        CHECK(a.trace[i].elbo == b.trace[i].elbo);  // bitwise
    }
    CHECK(a.final_elbo == b.final_elbo);
}

TEST_CASE("training improves the ELBO and tracks the exact model") {
    Rng rng(41);
    const int n = 500;
    const Eigen::VectorXd x = sorted_uniform(rng, n, 0.0, 1.0);
    const auto true_kernel = kernel_sum({matern32(1.0, 0.25), linear_kernel(0.1)});
    const double true_noise = 0.3;
    const Eigen::VectorXd y = sample_gp(rng, true_kernel, x, true_noise);

    const Eigen::VectorXd z = default_inducing_points(x, 30);
    auto init = make_data_init_state({kernel_sum({matern32(0.7, 0.4), linear_kernel(0.05)})}, z,
                                     x, y, gaussian_likelihood(1.0));
    TrainConfig cfg;
    cfg.iterations = 2000;
    cfg.minibatch_size = 256;
    cfg.learning_rate = 0.01;
    cfg.seed = 4;
    const auto result =
        train_svgp(init.state, gaussian_likelihood(init.suggested_noise), x, y, cfg);

    CHECK(result.final_elbo >= result.initial_elbo);

    // the bound holds against the exact model with the TRAINED hyperparameters
    ExactGPModel trained_exact(result.state.latents[0].kernel,
                               std::get<GaussianLikelihood>(result.likelihood.node).noise_variance,
                               x, y);
    CHECK(result.final_elbo <= -trained_exact.nlml() + 1e-6);

    // and lands within 5% of the evidence at the generating hyperparameters
    ExactGPModel exact(true_kernel, true_noise, x, y);
    const double target = -exact.nlml();
    CAPTURE(result.final_elbo, target);
    CHECK(std::abs(result.final_elbo - target) < 0.05 * std::abs(target));
}

TEST_CASE("trained state keeps its invariants after canonicalization") {
    Rng rng(43);
    const Eigen::VectorXd x = sorted_uniform(rng, 200, 0.0, 1.0);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) {
        y[i] = 0.05 + 0.9 * (0.5 + 0.5 * std::tanh(3.0 * (x[i] - 0.5))) * rng.uniform();
    }
    const Eigen::VectorXd z = default_inducing_points(x, 12);
    VariationalState state = make_prior_state({default_kernel(), default_kernel()}, z);
    TrainConfig cfg;
    cfg.iterations = 300;
    cfg.minibatch_size = 64;
    cfg.quadrature_points = 8;
    cfg.seed = 12;
    const auto result = train_svgp(state, beta_likelihood(), x, y, cfg);
    validate_state(result.state);  // strictly increasing z, valid factors
    CHECK(result.final_elbo >= result.initial_elbo);
}

TEST_CASE("train_svgp validation errors") {
    Rng rng(47);
    const Eigen::VectorXd x = sorted_uniform(rng, 20, 0.0, 1.0);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 0.5);
    const Eigen::VectorXd z = default_inducing_points(x, 4);
    VariationalState state = make_prior_state({matern32(1.0, 0.3)}, z);

    TrainConfig cfg;
    cfg.minibatch_size = 21;  // > N
    CHECK_THROWS_AS(train_svgp(state, gaussian_likelihood(0.1), x, y, cfg), ValidationError);

    cfg.minibatch_size = 8;
    CHECK_THROWS_AS(train_svgp(state, beta_likelihood(), x, y, cfg), ValidationError);

    VariationalState two = make_prior_state({matern32(1.0, 0.3), matern32(1.0, 0.3)}, z);
    Eigen::VectorXd bad = y;
    bad[3] = 1.0;  // outside the open interval
    TrainConfig beta_cfg;
    beta_cfg.minibatch_size = 8;
    try {
        train_svgp(two, beta_likelihood(), x, bad, beta_cfg);
        FAIL("expected SupportError");
    } catch (const SupportError& e) {
        REQUIRE(e.indices().size() == 1);
        CHECK(e.indices().front() == 3);
    }
}
