#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "powergp/errors.hpp"
#include "powergp/kernel.hpp"
#include "powergp/likelihood.hpp"
#include "powergp/linalg.hpp"
#include "powergp/math.hpp"
#include "powergp/optimizer.hpp"
#include "powergp/rng.hpp"

namespace powergp {

/// Marginal variances are clamped at this floor.
inline constexpr double kVarianceFloor = 1e-12;

/// One latent GP: its kernel and the free-form Gaussian q(u) = N(m, L L^T).
struct LatentBlock {
    KernelSpec kernel;
    Eigen::VectorXd m;
    Eigen::MatrixXd L;  // lower triangular, strictly positive diagonal
};

/// Inducing locations shared across latents plus one LatentBlock per latent
/// function of the attached likelihood.
struct VariationalState {
    Eigen::VectorXd z;
    std::vector<LatentBlock> latents;

    Eigen::Index inducing_count() const { return z.size(); }
    int latent_count() const { return static_cast<int>(latents.size()); }
};

namespace detail {

// Shape and finiteness checks shared with training internals, which may hold
// transiently unsorted inducing locations between optimizer steps.
inline void validate_state_shape(const VariationalState& state);

}  // namespace detail

inline void validate_state(const VariationalState& state) {
    detail::validate_state_shape(state);
    for (Eigen::Index i = 1; i < state.z.size(); ++i) {
        if (!(state.z[i] > state.z[i - 1])) {
            throw ValidationError("svgp", "inducing locations must be strictly increasing");
        }
    }
}

namespace detail {

inline void validate_state_shape(const VariationalState& state) {
    const Eigen::Index m = state.z.size();
    if (m < 1 || !state.z.allFinite()) {
        throw ValidationError("svgp", "inducing locations must be non-empty and finite");
    }
    if (state.latents.empty()) {
        throw ValidationError("svgp", "state needs at least one latent block");
    }
    for (const auto& lat : state.latents) {
        validate_kernel(lat.kernel);
        if (lat.m.size() != m || !lat.m.allFinite()) {
            throw ValidationError("svgp", "variational mean size mismatch");
        }
        if (lat.L.rows() != m || lat.L.cols() != m || !lat.L.allFinite()) {
            throw ValidationError("svgp", "variational factor size mismatch");
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!(lat.L(i, i) > 0.0)) {
                throw ValidationError("svgp", "variational factor diagonal must be > 0");
            }
            for (Eigen::Index c = i + 1; c < m; ++c) {
                if (lat.L(i, c) != 0.0) {
                    throw ValidationError("svgp", "variational factor must be lower triangular");
                }
            }
        }
    }
}

}  // namespace detail

/// M evenly spaced quantiles of the training inputs, deduplicated.
inline Eigen::VectorXd default_inducing_points(const Eigen::VectorXd& train_x, int m) {
    if (train_x.size() < 1 || m < 1) {
        throw ValidationError("svgp", "need at least one training point and one inducing point");
    }
    std::vector<double> sorted(train_x.data(), train_x.data() + train_x.size());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> z;
    z.reserve(static_cast<std::size_t>(m));
    const double n1 = static_cast<double>(sorted.size() - 1);
    for (int k = 0; k < m; ++k) {
        const double q = (k + 0.5) / m;
        const double pos = q * n1;
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        const double val = lo + 1 < sorted.size()
                               ? sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
                               : sorted[lo];
        if (z.empty() || val > z.back()) z.push_back(val);
    }
    return Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
}

/// State with q(u) set to the prior at the inducing points: m = 0,
/// S = K_zz, so every KL term starts at zero.
inline VariationalState make_prior_state(std::vector<KernelSpec> kernels, Eigen::VectorXd z,
                                         const JitterSchedule& jitter = {}) {
    VariationalState state;
    state.z = std::move(z);
    const Eigen::Index m = state.z.size();
    for (auto& k : kernels) {
        LatentBlock block;
        block.kernel = std::move(k);
        block.m = Eigen::VectorXd::Zero(m);
        block.L = robust_cholesky(kernel_matrix(block.kernel, state.z, state.z), jitter, "svgp").L;
        state.latents.push_back(std::move(block));
    }
    validate_state(state);
    return state;
}

struct DataInit {
    VariationalState state;
    double suggested_noise = 0.01;  // mean local residual variance
};

/// Data-driven initial state: per inducing point, local windowed moments of
/// the targets seed the variational means (per-likelihood mapping), and the
/// factors start as a small multiple of the identity. The prior init
/// (m = 0, S = K_zz) sits in a slow-to-escape basin under the direct (m, L)
/// parameterization, so training pipelines start here instead.
inline DataInit make_data_init_state(std::vector<KernelSpec> kernels, Eigen::VectorXd z,
                                     const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                     const LikelihoodSpec& lik, double init_scale = 0.1) {
    if (x.size() != y.size() || x.size() < 1) {
        throw ValidationError("svgp", "init data must be non-empty with matching targets");
    }
    const int latents = latent_count(lik);
    if (static_cast<int>(kernels.size()) != latents) {
        throw ValidationError("svgp", "kernel count must match the likelihood latent count");
    }
    const Eigen::Index n = x.size();
    const Eigen::Index m = z.size();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return x[a] < x[b]; });
    const Eigen::Index window =
        std::clamp<Eigen::Index>(n / std::max<Eigen::Index>(m, 1), 8, 200);

    Eigen::VectorXd local_mean(m);
    Eigen::VectorXd local_var(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        // window of `window` consecutive sorted points centred on z_k
        Eigen::Index lo = std::lower_bound(order.begin(), order.end(), z[k],
                                           [&](Eigen::Index i, double v) { return x[i] < v; }) -
                          order.begin();
        lo = std::clamp<Eigen::Index>(lo - window / 2, 0, std::max<Eigen::Index>(n - window, 0));
        const Eigen::Index hi = std::min(lo + window, n);
        double s1 = 0.0;
        double s2 = 0.0;
        for (Eigen::Index i = lo; i < hi; ++i) {
            const double v = y[order[static_cast<std::size_t>(i)]];
            s1 += v;
            s2 += v * v;
        }
        const double count = static_cast<double>(hi - lo);
        local_mean[k] = s1 / count;
        local_var[k] = std::max(s2 / count - local_mean[k] * local_mean[k], 1e-8);
    }

    DataInit init;
    init.state.z = std::move(z);
    init.suggested_noise = std::clamp(local_var.mean(), 1e-6, 10.0);
    for (int j = 0; j < latents; ++j) {
        LatentBlock block;
        block.kernel = std::move(kernels[static_cast<std::size_t>(j)]);
        block.m.resize(m);
        block.L = Eigen::MatrixXd::Zero(m, m);
        block.L.diagonal().setConstant(init_scale);
        for (Eigen::Index k = 0; k < m; ++k) {
            if (std::holds_alternative<BetaLikelihood>(lik.node)) {
                // local Beta moment matching in the mean/concentration form
                const double mean = std::clamp(local_mean[k], 1e-3, 1.0 - 1e-3);
                const double cap = mean * (1.0 - mean);
                const double var = std::clamp(local_var[k], cap / 500.0, 0.999 * cap);
                const double conc = std::clamp(cap / var - 1.0, 2.05, 500.0);
                block.m[k] = j == 0 ? std::log(conc * mean) : std::log(conc * (1.0 - mean));
            } else if (std::holds_alternative<HeteroGaussianLikelihood>(lik.node)) {
                block.m[k] = j == 0 ? local_mean[k] : std::log(local_var[k]);
            } else {
                block.m[k] = local_mean[k];
            }
        }
        init.state.latents.push_back(std::move(block));
    }
    validate_state(init.state);
    return init;
}

/// KL(N(m_q, L_q L_q^T) || N(m_p, C_p C_p^T)), both factors lower triangular.
inline double kl_gaussian(const Eigen::VectorXd& m_q, const Eigen::MatrixXd& L_q,
                          const Eigen::VectorXd& m_p, const Eigen::MatrixXd& chol_p) {
    const Eigen::Index m = m_q.size();
    if (m_p.size() != m || L_q.rows() != m || L_q.cols() != m || chol_p.rows() != m ||
        chol_p.cols() != m) {
        throw ValidationError("svgp", "kl_gaussian dimension mismatch");
    }
    const Eigen::MatrixXd w = chol_p.triangularView<Eigen::Lower>().solve(L_q);
    const Eigen::VectorXd u = chol_p.triangularView<Eigen::Lower>().solve(m_q - m_p);
    const double log_det_p = log_det_from_cholesky(chol_p);
    const double log_det_q = log_det_from_cholesky(L_q);
    return 0.5 * (w.squaredNorm() + u.squaredNorm() - static_cast<double>(m) + log_det_p -
                  log_det_q);
}

struct Marginals {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

namespace detail {

// Shared forward pass of the sparse projection for one latent.
struct LatentProjection {
    Eigen::MatrixXd chol;   // chol(K_zz + jitter I)
    Eigen::MatrixXd kinv;   // (K_zz + jitter I)^-1
    Eigen::MatrixXd kxz;    // B x M
    Eigen::MatrixXd a;      // K_xz Kinv
    Eigen::MatrixXd al;     // a L
    Eigen::VectorXd mu;
    Eigen::VectorXd var_raw;
    Eigen::VectorXd var;    // clamped at kVarianceFloor
};

inline LatentProjection project_latent(const LatentBlock& block, const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& x, const JitterSchedule& jitter) {
    LatentProjection p;
    const Eigen::Index m = z.size();
    p.chol = robust_cholesky(kernel_matrix(block.kernel, z, z), jitter, "svgp").L;
    p.kinv = Eigen::MatrixXd::Identity(m, m);
    p.chol.triangularView<Eigen::Lower>().solveInPlace(p.kinv);
    p.chol.transpose().triangularView<Eigen::Upper>().solveInPlace(p.kinv);
    p.kxz = kernel_matrix(block.kernel, x, z);
    p.a = p.kxz * p.kinv;
    p.al = p.a * block.L.triangularView<Eigen::Lower>();
    p.mu = p.a * block.m;
    p.var_raw = kernel_diag(block.kernel, x) - p.a.cwiseProduct(p.kxz).rowwise().sum() +
                p.al.rowwise().squaredNorm();
    p.var = p.var_raw.cwiseMax(kVarianceFloor);
    return p;
}

// Gauss-Hermite rules are cached per order.
inline const std::pair<Eigen::VectorXd, Eigen::VectorXd>& gh_rule(int h) {
    static std::mutex mutex;
    static std::map<int, std::pair<Eigen::VectorXd, Eigen::VectorXd>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(h);
    if (it == cache.end()) it = cache.emplace(h, gauss_hermite(h)).first;
    return it->second;
}

struct EllPointGrad {
    double value = 0.0;
    double dmu1 = 0.0, dvar1 = 0.0;
    double dmu2 = 0.0, dvar2 = 0.0;
    double dlog_noise = 0.0;
};

inline long count_clamped(double f) { return std::abs(f) > kLatentClamp ? 1 : 0; }

// E[log p(y | f)] for one point. Gaussian: closed form. Two-latent: tensor
// product Gauss-Hermite with H nodes per dimension.
inline double ell_value(const LikelihoodSpec& lik, double y, std::span<const double> mu,
                        std::span<const double> var, int h, long* clamp_events) {
    if (const auto* g = std::get_if<GaussianLikelihood>(&lik.node)) {
        const double r = y - mu[0];
        return -0.5 * (kLogTwoPi + std::log(g->noise_variance)) -
               (r * r + var[0]) / (2.0 * g->noise_variance);
    }
    const auto& [nodes, weights] = gh_rule(h);
    const double s1 = std::sqrt(var[0]);
    const double s2 = std::sqrt(var[1]);
    double acc = 0.0;
    double latents[2];
    for (int a = 0; a < h; ++a) {
        latents[0] = mu[0] + s1 * nodes[a];
        if (clamp_events != nullptr) *clamp_events += count_clamped(latents[0]);
        double row = 0.0;
        for (int b = 0; b < h; ++b) {
            latents[1] = mu[1] + s2 * nodes[b];
            if (clamp_events != nullptr && a == 0) *clamp_events += count_clamped(latents[1]);
            row += weights[b] * log_density(lik, y, latents);
        }
        acc += weights[a] * row;
    }
    return acc;
}

inline EllPointGrad ell_grad(const LikelihoodSpec& lik, double y, std::span<const double> mu,
                             std::span<const double> var, int h, long* clamp_events) {
    EllPointGrad out;
    if (const auto* g = std::get_if<GaussianLikelihood>(&lik.node)) {
        const double r = y - mu[0];
        const double inv = 1.0 / g->noise_variance;
        out.value = -0.5 * (kLogTwoPi + std::log(g->noise_variance)) - (r * r + var[0]) * 0.5 * inv;
        out.dmu1 = r * inv;
        out.dvar1 = -0.5 * inv;
        out.dlog_noise = -0.5 + (r * r + var[0]) * 0.5 * inv;
        return out;
    }
    const auto& [nodes, weights] = gh_rule(h);
    const double s1 = std::sqrt(var[0]);
    const double s2 = std::sqrt(var[1]);
    double ds1 = 0.0;
    double ds2 = 0.0;
    double latents[2];
    double dl[2];
    for (int a = 0; a < h; ++a) {
        latents[0] = mu[0] + s1 * nodes[a];
        if (clamp_events != nullptr) *clamp_events += count_clamped(latents[0]);
        for (int b = 0; b < h; ++b) {
            latents[1] = mu[1] + s2 * nodes[b];
            if (clamp_events != nullptr && a == 0) *clamp_events += count_clamped(latents[1]);
            const double w = weights[a] * weights[b];
            const double ld = log_density_grad(lik, y, latents, dl);
            out.value += w * ld;
            out.dmu1 += w * dl[0];
            out.dmu2 += w * dl[1];
            ds1 += w * dl[0] * nodes[a];
            ds2 += w * dl[1] * nodes[b];
        }
    }
    out.dvar1 = ds1 / (2.0 * s1);
    out.dvar2 = ds2 / (2.0 * s2);
    return out;
}

}  // namespace detail

/// Marginal variational distribution q(f_j) at the given inputs:
/// mu = A m_j, var = k(x, x) - A K_zz A^T + A S_j A^T with A = K_xz K_zz^-1.
inline Marginals latent_marginals(const VariationalState& state, int latent,
                                  const Eigen::VectorXd& x, const JitterSchedule& jitter = {}) {
    detail::validate_state_shape(state);
    if (latent < 0 || latent >= state.latent_count()) {
        throw ValidationError("svgp", "latent index out of range");
    }
    auto proj = detail::project_latent(state.latents[static_cast<std::size_t>(latent)], state.z,
                                       x, jitter);
    return {std::move(proj.mu), std::move(proj.var)};
}

/// E_q[log p(y | f)] for one observation given per-latent marginals.
inline double expected_log_lik(const LikelihoodSpec& lik, double y,
                               std::span<const double> means, std::span<const double> vars,
                               int h) {
    const int j = latent_count(lik);
    if (static_cast<int>(means.size()) != j || static_cast<int>(vars.size()) != j) {
        throw ValidationError("svgp", "marginal count does not match latent_count");
    }
    for (int i = 0; i < j; ++i) {
        if (!std::isfinite(means[i]) || !(vars[i] >= 0.0)) {
            throw ValidationError("svgp", "marginals must be finite with non-negative variance");
        }
    }
    if (j == 2 && (h < 2 || h > 100)) {
        throw ValidationError("svgp", "two-latent likelihoods need 2 <= H <= 100");
    }
    std::array<double, 2> clamped_vars{};
    for (int i = 0; i < j; ++i) clamped_vars[static_cast<std::size_t>(i)] = std::max(vars[i], 0.0);
    return detail::ell_value(lik, y, means, {clamped_vars.data(), static_cast<std::size_t>(j)}, h,
                             nullptr);
}

/// Minibatch evidence lower bound:
/// (N/B) sum_i E[log p(y_i | f_i)] - sum_j KL(q(u_j) || p(u_j)).
inline double elbo(const VariationalState& state, const LikelihoodSpec& lik,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& y, long n_total, int h,
                   const JitterSchedule& jitter = {}, long* clamp_events = nullptr) {
    detail::validate_state_shape(state);
    const Eigen::Index b = x.size();
    if (b < 1 || y.size() != b) {
        throw ValidationError("svgp", "batch must be non-empty with matching targets");
    }
    if (n_total < b) {
        throw ValidationError("svgp", "N_total must be at least the batch size");
    }
    const int j = latent_count(lik);
    if (state.latent_count() != j) {
        throw ValidationError("svgp", "latent blocks do not match likelihood latent_count");
    }
    std::vector<detail::LatentProjection> projections;
    projections.reserve(static_cast<std::size_t>(j));
    for (int k = 0; k < j; ++k) {
        projections.push_back(detail::project_latent(state.latents[static_cast<std::size_t>(k)],
                                                     state.z, x, jitter));
    }
    Eigen::VectorXd ell(b);
    double mu[2];
    double var[2];
    for (Eigen::Index i = 0; i < b; ++i) {
        for (int k = 0; k < j; ++k) {
            mu[k] = projections[static_cast<std::size_t>(k)].mu[i];
            var[k] = projections[static_cast<std::size_t>(k)].var[i];
        }
        ell[i] = detail::ell_value(lik, y[i], {mu, static_cast<std::size_t>(j)},
                                   {var, static_cast<std::size_t>(j)}, h, clamp_events);
    }
    const double scale = static_cast<double>(n_total) / static_cast<double>(b);
    double kl = 0.0;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(state.z.size());
    for (int k = 0; k < j; ++k) {
        const auto& lat = state.latents[static_cast<std::size_t>(k)];
        kl += kl_gaussian(lat.m, lat.L, zero, projections[static_cast<std::size_t>(k)].chol);
    }
    return scale * pairwise_sum(ell) - kl;
}

// ---------------------------------------------------------------------------
// flat parameter vector
//
// Per latent j: [kernel log params] [m] [L lower triangle row-major, diagonal
// stored as log]. Then the shared inducing locations, then log noise variance
// for the Gaussian likelihood. This layout is also the serialization order.
// ---------------------------------------------------------------------------

inline Eigen::Index param_count(const VariationalState& state, const LikelihoodSpec& lik) {
    const Eigen::Index m = state.z.size();
    Eigen::Index n = m;  // inducing locations
    for (const auto& lat : state.latents) {
        n += kernel_param_count(lat.kernel) + m + m * (m + 1) / 2;
    }
    if (std::holds_alternative<GaussianLikelihood>(lik.node)) n += 1;
    return n;
}

inline Eigen::VectorXd pack_params(const VariationalState& state, const LikelihoodSpec& lik) {
    const Eigen::Index m = state.z.size();
    Eigen::VectorXd out(param_count(state, lik));
    Eigen::Index at = 0;
    for (const auto& lat : state.latents) {
        const int p = kernel_param_count(lat.kernel);
        kernel_get_log_params(lat.kernel, {out.data() + at, static_cast<std::size_t>(p)});
        at += p;
        out.segment(at, m) = lat.m;
        at += m;
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < r; ++c) out[at++] = lat.L(r, c);
            out[at++] = std::log(lat.L(r, r));
        }
    }
    out.segment(at, m) = state.z;
    at += m;
    if (const auto* g = std::get_if<GaussianLikelihood>(&lik.node)) {
        out[at++] = std::log(g->noise_variance);
    }
    return out;
}

inline void unpack_params(const Eigen::VectorXd& params, VariationalState& state,
                          LikelihoodSpec& lik) {
    const Eigen::Index m = state.z.size();
    if (params.size() != param_count(state, lik)) {
        throw ValidationError("svgp", "parameter vector length mismatch");
    }
    Eigen::Index at = 0;
    for (auto& lat : state.latents) {
        const int p = kernel_param_count(lat.kernel);
        kernel_set_log_params(lat.kernel, {params.data() + at, static_cast<std::size_t>(p)});
        at += p;
        lat.m = params.segment(at, m);
        at += m;
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < r; ++c) lat.L(r, c) = params[at++];
            lat.L(r, r) = std::exp(params[at++]);
        }
    }
    state.z = params.segment(at, m);
    at += m;
    if (auto* g = std::get_if<GaussianLikelihood>(&lik.node)) {
        g->noise_variance = std::exp(params[at++]);
    }
}

struct ElboGradient {
    double value = 0.0;
    Eigen::VectorXd grad;
    long clamp_events = 0;
};

/// ELBO and its gradient w.r.t. the flat parameter vector, via hand-derived
/// adjoints through the projection / quadrature pipeline.
inline ElboGradient elbo_with_grad(const VariationalState& state, const LikelihoodSpec& lik,
                                   const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                   long n_total, int h, const JitterSchedule& jitter = {}) {
    detail::validate_state_shape(state);
    const Eigen::Index b = x.size();
    const Eigen::Index m = state.z.size();
    if (b < 1 || y.size() != b) {
        throw ValidationError("svgp", "batch must be non-empty with matching targets");
    }
    if (n_total < b) {
        throw ValidationError("svgp", "N_total must be at least the batch size");
    }
    const int j = latent_count(lik);
    if (state.latent_count() != j) {
        throw ValidationError("svgp", "latent blocks do not match likelihood latent_count");
    }
    const double scale = static_cast<double>(n_total) / static_cast<double>(b);

    ElboGradient out;
    out.grad = Eigen::VectorXd::Zero(param_count(state, lik));

    std::vector<detail::LatentProjection> proj;
    proj.reserve(static_cast<std::size_t>(j));
    for (int k = 0; k < j; ++k) {
        proj.push_back(detail::project_latent(state.latents[static_cast<std::size_t>(k)], state.z,
                                              x, jitter));
    }

    // per-point expected log-likelihood and its adjoints
    Eigen::VectorXd ell(b);
    std::vector<Eigen::VectorXd> gmu(static_cast<std::size_t>(j), Eigen::VectorXd::Zero(b));
    std::vector<Eigen::VectorXd> gvar(static_cast<std::size_t>(j), Eigen::VectorXd::Zero(b));
    double dlog_noise = 0.0;
    double mu[2];
    double var[2];
    for (Eigen::Index i = 0; i < b; ++i) {
        for (int k = 0; k < j; ++k) {
            mu[k] = proj[static_cast<std::size_t>(k)].mu[i];
            var[k] = proj[static_cast<std::size_t>(k)].var[i];
        }
        const auto g = detail::ell_grad(lik, y[i], {mu, static_cast<std::size_t>(j)},
                                        {var, static_cast<std::size_t>(j)}, h, &out.clamp_events);
        ell[i] = g.value;
        gmu[0][i] = g.dmu1;
        gvar[0][i] = proj[0].var_raw[i] > kVarianceFloor ? g.dvar1 : 0.0;
        if (j == 2) {
            gmu[1][i] = g.dmu2;
            gvar[1][i] = proj[1].var_raw[i] > kVarianceFloor ? g.dvar2 : 0.0;
        }
        dlog_noise += g.dlog_noise;
    }

    double kl_total = 0.0;
    Eigen::VectorXd zbar = Eigen::VectorXd::Zero(m);
    Eigen::Index at = 0;
    std::vector<double> dtheta_buf;
    for (int k = 0; k < j; ++k) {
        const auto& lat = state.latents[static_cast<std::size_t>(k)];
        const auto& pr = proj[static_cast<std::size_t>(k)];
        const int p = kernel_param_count(lat.kernel);
        dtheta_buf.assign(static_cast<std::size_t>(p), 0.0);
        const std::span<double> dtheta{dtheta_buf};
        const Eigen::VectorXd gm = scale * gmu[static_cast<std::size_t>(k)];
        const Eigen::VectorXd gv = scale * gvar[static_cast<std::size_t>(k)];

        // KL forward value
        const Eigen::MatrixXd w = pr.chol.triangularView<Eigen::Lower>().solve(
            Eigen::MatrixXd(lat.L.triangularView<Eigen::Lower>()));
        const Eigen::VectorXd u = pr.chol.triangularView<Eigen::Lower>().solve(lat.m);
        kl_total += 0.5 * (w.squaredNorm() + u.squaredNorm() - static_cast<double>(m) +
                           log_det_from_cholesky(pr.chol) - log_det_from_cholesky(lat.L));

        const Eigen::VectorXd kinv_m = pr.kinv * lat.m;

        // d elbo / d m
        Eigen::VectorXd mbar = pr.a.transpose() * gm - kinv_m;

        // d elbo / d L: marginal-variance path and KL path
        const Eigen::MatrixXd sbar = pr.a.transpose() * gv.asDiagonal() * pr.a;
        const Eigen::MatrixXd kinv_l =
            pr.kinv * Eigen::MatrixXd(lat.L.triangularView<Eigen::Lower>());
        Eigen::MatrixXd lbar =
            2.0 * sbar * Eigen::MatrixXd(lat.L.triangularView<Eigen::Lower>()) - kinv_l;
        for (Eigen::Index r = 0; r < m; ++r) {
            lbar(r, r) += 1.0 / lat.L(r, r);
            for (Eigen::Index c = r + 1; c < m; ++c) lbar(r, c) = 0.0;
        }

        // adjoint of A, then of K_xz and K_zz
        Eigen::MatrixXd abar = gm * lat.m.transpose();
        abar.noalias() -= gv.asDiagonal() * pr.kxz;
        abar.noalias() += 2.0 * (gv.asDiagonal() * pr.al) * lat.L.transpose();
        const Eigen::MatrixXd abar_kinv = abar * pr.kinv;
        const Eigen::MatrixXd bbar = abar_kinv - Eigen::MatrixXd(gv.asDiagonal() * pr.a);
        Eigen::MatrixXd kbar = -pr.a.transpose() * abar_kinv;
        kbar.noalias() -= 0.5 * (pr.kinv - kinv_l * kinv_l.transpose() -
                                 kinv_m * kinv_m.transpose());
        const Eigen::MatrixXd kbar_sym = 0.5 * (kbar + kbar.transpose());

        // contract with kernel derivatives
        double dx2 = 0.0;
        for (Eigen::Index i = 0; i < b; ++i) {
            // diagonal k(x_i, x_i) enters the variance directly
            kernel_eval_grad(lat.kernel, x[i], x[i], dtheta, nullptr);
            for (int t = 0; t < p; ++t) {
                out.grad[at + t] += gv[i] * dtheta[static_cast<std::size_t>(t)];
            }
            for (Eigen::Index c = 0; c < m; ++c) {
                kernel_eval_grad(lat.kernel, x[i], state.z[c], dtheta, &dx2);
                const double wgt = bbar(i, c);
                for (int t = 0; t < p; ++t) {
                    out.grad[at + t] += wgt * dtheta[static_cast<std::size_t>(t)];
                }
                zbar[c] += wgt * dx2;
            }
        }
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < m; ++c) {
                kernel_eval_grad(lat.kernel, state.z[r], state.z[c], dtheta, &dx2);
                const double wgt = kbar_sym(r, c);
                for (int t = 0; t < p; ++t) {
                    out.grad[at + t] += wgt * dtheta[static_cast<std::size_t>(t)];
                }
                zbar[c] += 2.0 * wgt * dx2;
            }
        }
        at += p;
        out.grad.segment(at, m) = mbar;
        at += m;
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < r; ++c) out.grad[at++] = lbar(r, c);
            out.grad[at++] = lbar(r, r) * lat.L(r, r);  // chain rule for log diagonal
        }
    }
    out.grad.segment(at, m) = zbar;
    at += m;
    if (std::holds_alternative<GaussianLikelihood>(lik.node)) {
        out.grad[at++] = scale * dlog_noise;
    }
    out.value = scale * pairwise_sum(ell) - kl_total;
    return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int minibatch_size = 256;
    int iterations = 2000;
    double learning_rate = 0.01;  // base step; ramped over warmup_iterations, then halved
                                  // every decay_half_life iterations
    int quadrature_points = 20;
    std::uint64_t seed = 0;
    int warmup_iterations = 100;
    int decay_half_life = 400;
    JitterSchedule jitter;
};

struct TracePoint {
    long iteration;
    double elbo;
};

/// Training aborted because the ELBO became non-finite; the trace up to the
/// failure is attached.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, std::vector<TracePoint> trace)
        : Error("svgp", "divergence", message), trace_(std::move(trace)) {}

    const std::vector<TracePoint>& trace() const noexcept { return trace_; }

private:
    std::vector<TracePoint> trace_;
};

struct TrainResult {
    VariationalState state;
    LikelihoodSpec likelihood;
    std::vector<TracePoint> trace;
    double initial_elbo = 0.0;
    double final_elbo = 0.0;
    long clamp_events = 0;
};

namespace detail {

// Restores the strictly-increasing invariant on z by jointly permuting the
// inducing locations, means, and covariances (a symmetry of the model).
inline void canonicalize_state(VariationalState& state, const JitterSchedule& jitter) {
    const Eigen::Index m = state.z.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return state.z[a] < state.z[b]; });
    bool identity = true;
    for (Eigen::Index i = 0; i < m; ++i) identity = identity && order[static_cast<std::size_t>(i)] == i;
    bool strictly_increasing = true;
    for (Eigen::Index i = 1; i < m; ++i) {
        strictly_increasing = strictly_increasing && state.z[i] > state.z[i - 1];
    }
    if (identity && strictly_increasing) return;

    Eigen::VectorXd z(m);
    for (Eigen::Index i = 0; i < m; ++i) z[i] = state.z[order[static_cast<std::size_t>(i)]];
    for (Eigen::Index i = 1; i < m; ++i) {
        if (!(z[i] > z[i - 1])) {
            z[i] = z[i - 1] + std::max(1e-12, 1e-12 * std::abs(z[i - 1]));
        }
    }
    for (auto& lat : state.latents) {
        Eigen::VectorXd mnew(m);
        const Eigen::MatrixXd s =
            Eigen::MatrixXd(lat.L.triangularView<Eigen::Lower>()) *
            Eigen::MatrixXd(lat.L.triangularView<Eigen::Lower>()).transpose();
        Eigen::MatrixXd sp(m, m);
        for (Eigen::Index r = 0; r < m; ++r) {
            mnew[r] = lat.m[order[static_cast<std::size_t>(r)]];
            for (Eigen::Index c = 0; c < m; ++c) {
                sp(r, c) = s(order[static_cast<std::size_t>(r)], order[static_cast<std::size_t>(c)]);
            }
        }
        lat.m = std::move(mnew);
        lat.L = robust_cholesky(sp, jitter, "svgp").L;
    }
    state.z = std::move(z);
}

}  // namespace detail

/// Stochastic gradient ascent on the ELBO: variational parameters, kernel
/// hyperparameters, inducing locations (and Gaussian noise) all train. The
/// full-data ELBO is recorded at iteration 0 and every 100th iteration;
/// if the endpoint is not the best recorded value the best snapshot is
/// returned, so the final full-data ELBO never falls below the initial one.
inline TrainResult train_svgp(VariationalState state, LikelihoodSpec lik,
                              const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                              const TrainConfig& cfg) {
    validate_state(state);
    const Eigen::Index n = x.size();
    if (n < 1 || y.size() != n) {
        throw ValidationError("svgp", "dataset must be non-empty with matching targets");
    }
    const int j = latent_count(lik);
    if (state.latent_count() != j) {
        throw ValidationError("svgp", "latent blocks do not match likelihood latent_count");
    }
    if (cfg.minibatch_size < 1 || cfg.minibatch_size > n) {
        throw ValidationError("svgp", "minibatch size must lie in [1, N]");
    }
    if (cfg.iterations < 0) throw ValidationError("svgp", "iterations must be >= 0");
    if (!(cfg.learning_rate > 0.0)) throw ValidationError("svgp", "learning rate must be > 0");
    const int h = cfg.quadrature_points;
    if (h < 1 || h > 100 || (j == 2 && h < 2)) {
        throw ValidationError("svgp", "quadrature points out of range for this likelihood");
    }
    {
        std::vector<long> bad;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!in_support(lik, y[i])) bad.push_back(static_cast<long>(i));
        }
        if (!bad.empty()) {
            throw SupportError("svgp",
                               std::to_string(bad.size()) + " target(s) outside likelihood support",
                               std::move(bad));
        }
    }

    TrainResult result;
    result.trace.reserve(static_cast<std::size_t>(cfg.iterations / 100 + 2));

    Eigen::VectorXd params = pack_params(state, lik);
    VariationalState work_state = state;
    LikelihoodSpec work_lik = lik;
    const auto full_elbo = [&](const Eigen::VectorXd& p) {
        unpack_params(p, work_state, work_lik);
        return elbo(work_state, work_lik, x, y, n, h, cfg.jitter, &result.clamp_events);
    };

    double e0 = full_elbo(params);
    result.trace.push_back({0, e0});
    result.initial_elbo = e0;
    if (!std::isfinite(e0)) {
        throw DivergenceError("initial ELBO is non-finite", result.trace);
    }
    Eigen::VectorXd best_params = params;
    double best_value = e0;

    AdamOptimizer adam(params.size(), cfg.learning_rate);
    Rng rng(cfg.seed);
    Eigen::VectorXd xb(cfg.minibatch_size);
    Eigen::VectorXd yb(cfg.minibatch_size);
    double last_recorded = e0;
    long last_recorded_iter = 0;
    for (int t = 1; t <= cfg.iterations; ++t) {
        for (int i = 0; i < cfg.minibatch_size; ++i) {
            const auto idx = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
            xb[i] = x[idx];
            yb[i] = y[idx];
        }
        unpack_params(params, work_state, work_lik);
        auto g = elbo_with_grad(work_state, work_lik, xb, yb, n, h, cfg.jitter);
        result.clamp_events += g.clamp_events;
        if (!std::isfinite(g.value) || !g.grad.allFinite()) {
            throw DivergenceError("minibatch ELBO or gradient became non-finite at iteration " +
                                      std::to_string(t),
                                  result.trace);
        }
        // warmup keeps the scale-free first steps from kicking the state out
        // of its initialization; decay settles the sharp optima late on
        const double warmup =
            cfg.warmup_iterations > 0 ? std::min(1.0, static_cast<double>(t) / cfg.warmup_iterations)
                                      : 1.0;
        const double decay =
            cfg.decay_half_life > 0 ? std::pow(0.5, static_cast<double>(t) / cfg.decay_half_life)
                                    : 1.0;
        adam.step(params, -g.grad, warmup * decay);
        if (t % 100 == 0) {
            const double e = full_elbo(params);
            result.trace.push_back({t, e});
            last_recorded = e;
            last_recorded_iter = t;
            if (!std::isfinite(e)) {
                throw DivergenceError("full-data ELBO became non-finite at iteration " +
                                          std::to_string(t),
                                      result.trace);
            }
            if (e > best_value) {
                best_value = e;
                best_params = params;
            }
        }
    }

    double final_value = last_recorded_iter == cfg.iterations ? last_recorded : full_elbo(params);
    if (final_value < best_value) {
        params = best_params;
        final_value = best_value;
    }
    unpack_params(params, state, lik);
    detail::canonicalize_state(state, cfg.jitter);
    validate_state(state);
    result.state = std::move(state);
    result.likelihood = lik;
    result.final_elbo = final_value;
    return result;
}

}  // namespace powergp
