#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "powergp/errors.hpp"

namespace powergp {

struct KernelSpec;

struct SquaredExponentialKernel {
    double signal_variance;
    double lengthscale;
};

struct Matern32Kernel {
    double signal_variance;
    double lengthscale;
};

/// k(x, x') = variance * x * x' (no offset; inputs are normalized wind
/// speeds, so the origin is meaningful).
struct LinearKernel {
    double variance;
};

struct SumKernel {
    std::vector<KernelSpec> parts;
};

/// Algebraic description of a covariance function. Immutable in spirit:
/// construct through the factories below, which enforce positivity.
struct KernelSpec {
    std::variant<SquaredExponentialKernel, Matern32Kernel, LinearKernel, SumKernel> node;
};

inline void validate_kernel(const KernelSpec& spec) {
    std::visit(
        [](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SquaredExponentialKernel> ||
                          std::is_same_v<T, Matern32Kernel>) {
                if (!(k.signal_variance > 0.0) || !std::isfinite(k.signal_variance) ||
                    !(k.lengthscale > 0.0) || !std::isfinite(k.lengthscale)) {
                    throw ValidationError("kernels",
                                          "signal variance and lengthscale must be finite and > 0");
                }
            } else if constexpr (std::is_same_v<T, LinearKernel>) {
                if (!(k.variance > 0.0) || !std::isfinite(k.variance)) {
                    throw ValidationError("kernels", "linear kernel variance must be finite and > 0");
                }
            } else {
                if (k.parts.size() < 2) {
                    throw ValidationError("kernels", "sum kernel needs at least 2 parts");
                }
                for (const auto& p : k.parts) validate_kernel(p);
            }
        },
        spec.node);
}

inline KernelSpec squared_exponential(double signal_variance, double lengthscale) {
    KernelSpec s{SquaredExponentialKernel{signal_variance, lengthscale}};
    validate_kernel(s);
    return s;
}

inline KernelSpec matern32(double signal_variance, double lengthscale) {
    KernelSpec s{Matern32Kernel{signal_variance, lengthscale}};
    validate_kernel(s);
    return s;
}

inline KernelSpec linear_kernel(double variance) {
    KernelSpec s{LinearKernel{variance}};
    validate_kernel(s);
    return s;
}

/// Builds a sum kernel, flattening nested sums so evaluation order is
/// immaterial.
inline KernelSpec kernel_sum(std::vector<KernelSpec> parts) {
    std::vector<KernelSpec> flat;
    for (auto& p : parts) {
        if (auto* s = std::get_if<SumKernel>(&p.node)) {
            for (auto& q : s->parts) flat.push_back(std::move(q));
        } else {
            flat.push_back(std::move(p));
        }
    }
    KernelSpec s{SumKernel{std::move(flat)}};
    validate_kernel(s);
    return s;
}

inline double kernel_eval(const KernelSpec& spec, double x, double x2) {
    return std::visit(
        [&](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SquaredExponentialKernel>) {
                const double d = (x - x2) / k.lengthscale;
                return k.signal_variance * std::exp(-0.5 * d * d);
            } else if constexpr (std::is_same_v<T, Matern32Kernel>) {
                static constexpr double kSqrt3 = 1.7320508075688772935;
                const double r = kSqrt3 * std::abs(x - x2) / k.lengthscale;
                return k.signal_variance * (1.0 + r) * std::exp(-r);
            } else if constexpr (std::is_same_v<T, LinearKernel>) {
                return k.variance * x * x2;
            } else {
                double s = 0.0;
                for (const auto& p : k.parts) s += kernel_eval(p, x, x2);
                return s;
            }
        },
        spec.node);
}

/// Number of scalar hyperparameters (all optimized in log space).
inline int kernel_param_count(const KernelSpec& spec) {
    return std::visit(
        [](const auto& k) -> int {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SquaredExponentialKernel> ||
                          std::is_same_v<T, Matern32Kernel>) {
                return 2;
            } else if constexpr (std::is_same_v<T, LinearKernel>) {
                return 1;
            } else {
                int n = 0;
                for (const auto& p : k.parts) n += kernel_param_count(p);
                return n;
            }
        },
        spec.node);
}

inline void kernel_get_log_params(const KernelSpec& spec, std::span<double> out) {
    std::size_t i = 0;
    const auto walk = [&](const auto& self, const KernelSpec& s) -> void {
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, SquaredExponentialKernel> ||
                              std::is_same_v<T, Matern32Kernel>) {
                    out[i++] = std::log(k.signal_variance);
                    out[i++] = std::log(k.lengthscale);
                } else if constexpr (std::is_same_v<T, LinearKernel>) {
                    out[i++] = std::log(k.variance);
                } else {
                    for (const auto& p : k.parts) self(self, p);
                }
            },
            s.node);
    };
    walk(walk, spec);
}

inline void kernel_set_log_params(KernelSpec& spec, std::span<const double> in) {
    std::size_t i = 0;
    const auto walk = [&](const auto& self, KernelSpec& s) -> void {
        std::visit(
            [&](auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, SquaredExponentialKernel> ||
                              std::is_same_v<T, Matern32Kernel>) {
                    k.signal_variance = std::exp(in[i++]);
                    k.lengthscale = std::exp(in[i++]);
                } else if constexpr (std::is_same_v<T, LinearKernel>) {
                    k.variance = std::exp(in[i++]);
                } else {
                    for (auto& p : k.parts) self(self, p);
                }
            },
            s.node);
    };
    walk(walk, spec);
}

/// Evaluates k(x, x') together with its gradient w.r.t. the log
/// hyperparameters (written to `dlog_theta`) and, when `dx2` is non-null,
/// the derivative w.r.t. the second argument.
inline double kernel_eval_grad(const KernelSpec& spec, double x, double x2,
                               std::span<double> dlog_theta, double* dx2) {
    std::size_t i = 0;
    if (dx2 != nullptr) *dx2 = 0.0;
    const auto walk = [&](const auto& self, const KernelSpec& s) -> double {
        return std::visit(
            [&](const auto& k) -> double {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, SquaredExponentialKernel>) {
                    const double l = k.lengthscale;
                    const double d = x - x2;
                    const double v = k.signal_variance * std::exp(-0.5 * d * d / (l * l));
                    dlog_theta[i++] = v;
                    dlog_theta[i++] = v * d * d / (l * l);
                    if (dx2 != nullptr) *dx2 += v * d / (l * l);
                    return v;
                } else if constexpr (std::is_same_v<T, Matern32Kernel>) {
                    static constexpr double kSqrt3 = 1.7320508075688772935;
                    const double l = k.lengthscale;
                    const double d = x - x2;
                    const double r = kSqrt3 * std::abs(d) / l;
                    const double e = std::exp(-r);
                    const double v = k.signal_variance * (1.0 + r) * e;
                    dlog_theta[i++] = v;
                    dlog_theta[i++] = k.signal_variance * r * r * e;
                    if (dx2 != nullptr) *dx2 += k.signal_variance * 3.0 * d / (l * l) * e;
                    return v;
                } else if constexpr (std::is_same_v<T, LinearKernel>) {
                    const double v = k.variance * x * x2;
                    dlog_theta[i++] = v;
                    if (dx2 != nullptr) *dx2 += k.variance * x;
                    return v;
                } else {
                    double v = 0.0;
                    for (const auto& p : k.parts) v += self(self, p);
                    return v;
                }
            },
            s.node);
    };
    return walk(walk, spec);
}

/// Cross-covariance matrix; entry (i, j) = k(X[i], X2[j]). Deterministic.
inline Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::VectorXd& X,
                                     const Eigen::VectorXd& X2) {
    if (X.size() == 0 || X2.size() == 0) {
        throw ValidationError("kernels", "kernel_matrix inputs must be non-empty");
    }
    if (!X.allFinite() || !X2.allFinite()) {
        throw ValidationError("kernels", "kernel_matrix inputs must be finite");
    }
    Eigen::MatrixXd out(X.size(), X2.size());
    for (Eigen::Index i = 0; i < X.size(); ++i) {
        for (Eigen::Index j = 0; j < X2.size(); ++j) {
            out(i, j) = kernel_eval(spec, X[i], X2[j]);
        }
    }
    return out;
}

/// Pairwise diagonal k(X[i], X2[i]) of length min(|X|, |X2|).
inline Eigen::VectorXd kernel_diag(const KernelSpec& spec, const Eigen::VectorXd& X,
                                   const Eigen::VectorXd& X2) {
    if (X.size() == 0 || X2.size() == 0) {
        throw ValidationError("kernels", "kernel_diag inputs must be non-empty");
    }
    if (!X.allFinite() || !X2.allFinite()) {
        throw ValidationError("kernels", "kernel_diag inputs must be finite");
    }
    const Eigen::Index n = std::min(X.size(), X2.size());
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = kernel_eval(spec, X[i], X2[i]);
    return out;
}

inline Eigen::VectorXd kernel_diag(const KernelSpec& spec, const Eigen::VectorXd& X) {
    return kernel_diag(spec, X, X);
}

inline nlohmann::json kernel_to_json(const KernelSpec& spec) {
    return std::visit(
        [](const auto& k) -> nlohmann::json {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SquaredExponentialKernel>) {
                return {{"type", "squared_exponential"},
                        {"variance", k.signal_variance},
                        {"lengthscale", k.lengthscale}};
            } else if constexpr (std::is_same_v<T, Matern32Kernel>) {
                return {{"type", "matern32"},
                        {"variance", k.signal_variance},
                        {"lengthscale", k.lengthscale}};
            } else if constexpr (std::is_same_v<T, LinearKernel>) {
                return {{"type", "linear"}, {"variance", k.variance}};
            } else {
                nlohmann::json parts = nlohmann::json::array();
                for (const auto& p : k.parts) parts.push_back(kernel_to_json(p));
                return {{"type", "sum"}, {"parts", parts}};
            }
        },
        spec.node);
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("type")) {
        throw ValidationError("kernels", "kernel config must be an object with a \"type\" field");
    }
    const std::string type = j.at("type").get<std::string>();
    const auto num = [&](const char* key) -> double {
        if (!j.contains(key) || !j.at(key).is_number()) {
            throw ValidationError("kernels",
                                  "kernel config \"" + type + "\" missing numeric \"" + key + "\"");
        }
        return j.at(key).get<double>();
    };
    if (type == "squared_exponential") {
        return squared_exponential(num("variance"), num("lengthscale"));
    }
    if (type == "matern32") {
        return matern32(num("variance"), num("lengthscale"));
    }
    if (type == "linear") {
        return linear_kernel(num("variance"));
    }
    if (type == "sum") {
        if (!j.contains("parts") || !j.at("parts").is_array()) {
            throw ValidationError("kernels", "sum kernel config needs a \"parts\" array");
        }
        std::vector<KernelSpec> parts;
        for (const auto& p : j.at("parts")) parts.push_back(kernel_from_json(p));
        return kernel_sum(std::move(parts));
    }
    throw ValidationError("kernels", "unknown kernel type \"" + type + "\"");
}

/// Case-study default: Matern 3/2 plus a linear trend.
inline KernelSpec default_kernel() {
    return kernel_sum({matern32(1.0, 0.2), linear_kernel(0.1)});
}

}  // namespace powergp
