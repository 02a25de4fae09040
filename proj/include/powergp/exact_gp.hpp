#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <utility>

#include "powergp/errors.hpp"
#include "powergp/kernel.hpp"
#include "powergp/linalg.hpp"
#include "powergp/math.hpp"
#include "powergp/optimizer.hpp"

namespace powergp {

/// Dense GP regression with a Gaussian likelihood and zero prior mean.
/// Reference implementation the sparse engine is validated against.
/// The Cholesky factor of K + sigma_n^2 I is cached at construction.
class ExactGPModel {
public:
    ExactGPModel(KernelSpec kernel, double noise_variance, Eigen::VectorXd train_x,
                 Eigen::VectorXd train_y, double target_offset = 0.0,
                 JitterSchedule jitter = {})
        : kernel_(std::move(kernel)),
          noise_variance_(noise_variance),
          x_(std::move(train_x)),
          y_(std::move(train_y)),
          offset_(target_offset),
          jitter_schedule_(std::move(jitter)) {
        validate_kernel(kernel_);
        if (x_.size() != y_.size() || x_.size() < 1) {
            throw ValidationError("exact-gp", "train_x and train_y must be equally sized, N >= 1");
        }
        if (x_.size() > 10000) {
            throw ValidationError("exact-gp", "dense factorization guarded at N <= 10000");
        }
        if (!x_.allFinite() || !y_.allFinite()) {
            throw ValidationError("exact-gp", "training data must be finite");
        }
        if (noise_variance_ < 0.0 || !std::isfinite(noise_variance_)) {
            throw ValidationError("exact-gp", "noise variance must be finite and >= 0");
        }
        refactor();
    }

    /// Subtracts the training mean from the targets; it is added back at
    /// prediction, consistent with the zero-mean prior convention.
    static ExactGPModel with_centered_targets(KernelSpec kernel, double noise_variance,
                                              Eigen::VectorXd train_x, Eigen::VectorXd train_y,
                                              JitterSchedule jitter = {}) {
        const double offset = train_y.size() > 0 ? train_y.mean() : 0.0;
        Eigen::VectorXd centered = train_y.array() - offset;
        return ExactGPModel(std::move(kernel), noise_variance, std::move(train_x),
                            std::move(centered), offset, std::move(jitter));
    }

    const KernelSpec& kernel() const { return kernel_; }
    double noise_variance() const { return noise_variance_; }
    double target_offset() const { return offset_; }
    const Eigen::VectorXd& train_x() const { return x_; }
    const Eigen::VectorXd& train_y() const { return y_; }
    double jitter_used() const { return jitter_; }

    /// Negative log marginal likelihood -log p(y | x, theta).
    double nlml() const {
        const double n = static_cast<double>(x_.size());
        return 0.5 * y_.dot(alpha_) + 0.5 * log_det_from_cholesky(chol_) + 0.5 * n * kLogTwoPi;
    }

    /// nlml gradient w.r.t. [kernel log hyperparameters..., log noise variance].
    double nlml_grad(Eigen::VectorXd& grad) const {
        const Eigen::Index n = x_.size();
        const int p = kernel_param_count(kernel_);
        grad = Eigen::VectorXd::Zero(p + 1);
        // Kinv via the cached factor
        Eigen::MatrixXd kinv = Eigen::MatrixXd::Identity(n, n);
        chol_.triangularView<Eigen::Lower>().solveInPlace(kinv);
        chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(kinv);
        std::vector<double> dtheta(static_cast<std::size_t>(p));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                kernel_eval_grad(kernel_, x_[i], x_[j], dtheta, nullptr);
                const double w = (i == j ? 0.5 : 1.0) * (kinv(i, j) - alpha_[i] * alpha_[j]);
                for (int k = 0; k < p; ++k) grad[k] += w * dtheta[static_cast<std::size_t>(k)];
            }
        }
        grad[p] = 0.5 * noise_variance_ * (kinv.trace() - alpha_.squaredNorm());
        return nlml();
    }

    struct Posterior {
        Eigen::VectorXd mean;
        Eigen::VectorXd variance;
    };

    /// Per-point posterior mean and variance; `include_noise` adds the
    /// observation noise to each variance.
    Posterior posterior(const Eigen::VectorXd& test_x, bool include_noise) const {
        if (test_x.size() == 0 || !test_x.allFinite()) {
            throw ValidationError("exact-gp", "test inputs must be non-empty and finite");
        }
        const Eigen::MatrixXd k_star = kernel_matrix(kernel_, x_, test_x);
        Posterior out;
        out.mean = (k_star.transpose() * alpha_).array() + offset_;
        const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(k_star);
        out.variance = kernel_diag(kernel_, test_x) - v.colwise().squaredNorm().transpose();
        out.variance = out.variance.cwiseMax(0.0);
        if (include_noise) out.variance.array() += noise_variance_;
        return out;
    }

    Eigen::VectorXd log_hyperparameters() const {
        const int p = kernel_param_count(kernel_);
        Eigen::VectorXd h(p + 1);
        kernel_get_log_params(kernel_, {h.data(), static_cast<std::size_t>(p)});
        h[p] = std::log(noise_variance_);
        return h;
    }

    ExactGPModel with_log_hyperparameters(const Eigen::VectorXd& h) const {
        const int p = kernel_param_count(kernel_);
        if (h.size() != p + 1) {
            throw ValidationError("exact-gp", "hyperparameter vector length mismatch");
        }
        KernelSpec k = kernel_;
        kernel_set_log_params(k, {h.data(), static_cast<std::size_t>(p)});
        return ExactGPModel(std::move(k), std::exp(h[p]), x_, y_, offset_, jitter_schedule_);
    }

private:
    void refactor() {
        Eigen::MatrixXd cov = kernel_matrix(kernel_, x_, x_);
        cov.diagonal().array() += noise_variance_;
        auto chol = robust_cholesky(cov, jitter_schedule_, "exact-gp");
        chol_ = std::move(chol.L);
        jitter_ = chol.jitter;
        alpha_ = chol_.triangularView<Eigen::Lower>().solve(y_);
        chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha_);
    }

    KernelSpec kernel_;
    double noise_variance_;
    Eigen::VectorXd x_;
    Eigen::VectorXd y_;
    double offset_;
    JitterSchedule jitter_schedule_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
};

struct ExactFitConfig {
    double learning_rate = 0.05;
    int iterations = 500;
    int polish_steps = 200;
    double tolerance = 1e-10;
};

struct ExactFitResult {
    ExactGPModel model;
    bool converged;
    double initial_nlml;
    double final_nlml;
};

namespace detail {

inline double try_nlml(const ExactGPModel& base, const Eigen::VectorXd& h) {
    try {
        return base.with_log_hyperparameters(h).nlml();
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace detail

/// Type-II maximum likelihood: adaptive-moment descent on the log
/// hyperparameters with a decaying step, then a monotone backtracking
/// polish. Best-seen hyperparameters are returned, so the final nlml never
/// exceeds the initial one.
inline ExactFitResult fit_exact(const ExactGPModel& model, const ExactFitConfig& cfg = {}) {
    if (!(model.noise_variance() > 0.0)) {
        throw ValidationError("exact-gp", "fit_exact requires a strictly positive noise variance");
    }
    if (cfg.iterations < 0 || cfg.polish_steps < 0 || !(cfg.learning_rate > 0.0)) {
        throw ValidationError("exact-gp", "invalid fit configuration");
    }
    Eigen::VectorXd h = model.log_hyperparameters();
    Eigen::VectorXd best_h = h;
    double best_f = model.nlml();
    const double initial = best_f;

    AdamOptimizer adam(h.size(), cfg.learning_rate);
    Eigen::VectorXd grad;
    for (int t = 0; t < cfg.iterations; ++t) {
        double f;
        try {
            f = model.with_log_hyperparameters(h).nlml_grad(grad);
        } catch (const NumericalError&) {
            h = best_h;  // back off to the last good point
            adam = AdamOptimizer(h.size(), cfg.learning_rate);
            continue;
        }
        if (f < best_f) {
            best_f = f;
            best_h = h;
        }
        adam.step(h, grad, std::pow(0.5, t / 100.0));
    }

    // backtracking gradient descent from the best point; only accepts
    // decreasing steps
    bool converged = false;
    h = best_h;
    for (int t = 0; t < cfg.polish_steps; ++t) {
        double f;
        try {
            f = model.with_log_hyperparameters(h).nlml_grad(grad);
        } catch (const NumericalError&) {
            break;
        }
        const double g2 = grad.squaredNorm();
        if (g2 == 0.0) {
            converged = true;
            break;
        }
        double step = 1.0 / std::max(1.0, std::sqrt(g2));
        bool accepted = false;
        for (int halvings = 0; halvings < 45; ++halvings) {
            const Eigen::VectorXd cand = h - step * grad;
            const double fc = detail::try_nlml(model, cand);
            if (fc < f - 1e-4 * step * g2) {
                if (f - fc < cfg.tolerance * (1.0 + std::abs(f))) {
                    converged = true;
                }
                h = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (f < best_f) {
            best_f = f;
            best_h = h;
        }
        if (!accepted || converged) {
            converged = true;
            break;
        }
    }

    return ExactFitResult{model.with_log_hyperparameters(best_h), converged, initial, best_f};
}

}  // namespace powergp
