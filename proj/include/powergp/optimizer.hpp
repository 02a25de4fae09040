#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "powergp/errors.hpp"

namespace powergp {

/// Gradient descent with adaptive first/second moment accumulators.
/// Minimizes; callers maximizing an objective pass the negated gradient.
class AdamOptimizer {
public:
    AdamOptimizer(Eigen::Index dim, double learning_rate)
        : lr_(learning_rate),
          m_(Eigen::VectorXd::Zero(dim)),
          v_(Eigen::VectorXd::Zero(dim)) {
        if (!(learning_rate > 0.0)) {
            throw ValidationError("optimizer", "learning rate must be > 0");
        }
    }

    /// One update of x in place. `lr_scale` multiplies the base step
    /// (1.0 for a constant schedule).
    void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, double lr_scale = 1.0) {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_.array().matrix() + (1.0 - beta2_) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        const double step_size = lr_ * lr_scale / bc1;
        x.array() -= step_size * m_.array() / ((v_.array() / bc2).sqrt() + eps_);
    }

private:
    double lr_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long t_ = 0;
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
};

}  // namespace powergp
