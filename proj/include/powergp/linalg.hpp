#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "powergp/errors.hpp"

namespace powergp {

/// Jitter escalation for Cholesky factorizations: each multiplier scales the
/// mean diagonal; attempts run in order until one succeeds.
struct JitterSchedule {
    std::vector<double> multipliers{0.0, 1e-10, 1e-8, 1e-6};
};

struct CholeskyResult {
    Eigen::MatrixXd L;
    double jitter = 0.0;
};

/// Lower Cholesky factor of a symmetric matrix, escalating jitter per the
/// schedule. Throws NumericalError (with the attempted levels) when all fail.
inline CholeskyResult robust_cholesky(const Eigen::MatrixXd& K, const JitterSchedule& schedule,
                                      const std::string& module) {
    const double scale = std::abs(K.diagonal().mean());
    std::vector<double> attempted;
    for (double mult : schedule.multipliers) {
        const double jitter = mult * (scale > 0.0 ? scale : 1.0);
        attempted.push_back(jitter);
        Eigen::MatrixXd shifted = K;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) {
            return {Eigen::MatrixXd(llt.matrixL()), jitter};
        }
    }
    throw NumericalError(module, "Cholesky factorization failed after jitter escalation",
                         attempted);
}

inline double log_det_from_cholesky(const Eigen::MatrixXd& L) {
    return 2.0 * L.diagonal().array().log().sum();
}

}  // namespace powergp
