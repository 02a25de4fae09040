#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "powergp/data.hpp"
#include "powergp/errors.hpp"
#include "powergp/kernel.hpp"
#include "powergp/likelihood.hpp"
#include "powergp/svgp.hpp"

namespace powergp {

/// Serialized trained model: everything needed to reproduce predictions and
/// the evaluation split.
struct ModelArtifact {
    std::string model;  // standard | warped | hbp | exact
    LikelihoodSpec likelihood{GaussianLikelihood{1.0}};
    VariationalState state;       // sparse models
    Eigen::VectorXd exact_x;      // exact model: the dense training data
    Eigen::VectorXd exact_y;
    double exact_offset = 0.0;
    Normalization normalization;
    double warp_epsilon = 1e-4;
    double interior_epsilon = 1e-4;
    double clipped_fraction = 0.0;
    std::uint64_t train_seed = 0;
    std::uint64_t split_seed = 0;
    CleaningRules cleaning;
};

namespace detail {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
    return j;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace detail

inline std::string likelihood_tag(const LikelihoodSpec& lik) {
    if (std::holds_alternative<GaussianLikelihood>(lik.node)) return "gaussian";
    if (std::holds_alternative<HeteroGaussianLikelihood>(lik.node)) return "hetero";
    return "beta";
}

inline nlohmann::json artifact_to_json(const ModelArtifact& artifact) {
    nlohmann::json j;
    j["model"] = artifact.model;
    j["likelihood"] = likelihood_tag(artifact.likelihood);
    if (const auto* g = std::get_if<GaussianLikelihood>(&artifact.likelihood.node)) {
        j["noise_variance"] = g->noise_variance;
    }
    if (artifact.model == "exact") {
        j["train_x"] = detail::vector_to_json(artifact.exact_x);
        j["train_y"] = detail::vector_to_json(artifact.exact_y);
        j["target_offset"] = artifact.exact_offset;
        j["kernels"] = nlohmann::json::array({kernel_to_json(artifact.state.latents.at(0).kernel)});
    } else {
        j["inducing"] = detail::vector_to_json(artifact.state.z);
        nlohmann::json kernels = nlohmann::json::array();
        nlohmann::json latents = nlohmann::json::array();
        for (const auto& lat : artifact.state.latents) {
            kernels.push_back(kernel_to_json(lat.kernel));
            nlohmann::json lj;
            lj["m"] = detail::vector_to_json(lat.m);
            nlohmann::json flat = nlohmann::json::array();
            for (Eigen::Index r = 0; r < lat.L.rows(); ++r) {
                for (Eigen::Index c = 0; c <= r; ++c) flat.push_back(lat.L(r, c));
            }
            lj["L"] = flat;
            latents.push_back(lj);
        }
        j["kernels"] = kernels;
        j["latents"] = latents;
    }
    j["normalization"] = {{"power_min", artifact.normalization.power_min},
                          {"power_max", artifact.normalization.power_max},
                          {"speed_min", artifact.normalization.speed_min},
                          {"speed_max", artifact.normalization.speed_max}};
    j["warp_epsilon"] = artifact.warp_epsilon;
    j["interior_epsilon"] = artifact.interior_epsilon;
    j["clipped_fraction"] = artifact.clipped_fraction;
    j["train_seed"] = artifact.train_seed;
    j["split_seed"] = artifact.split_seed;
    j["cleaning"] = {{"outlier_low", artifact.cleaning.outlier_low},
                     {"outlier_high", artifact.cleaning.outlier_high},
                     {"curtail_power", artifact.cleaning.curtail_power},
                     {"curtail_speed_quantile", artifact.cleaning.curtail_speed_quantile},
                     {"high_power", artifact.cleaning.high_power},
                     {"interior_epsilon", artifact.cleaning.interior_epsilon}};
    return j;
}

inline ModelArtifact artifact_from_json(const nlohmann::json& j) {
    ModelArtifact artifact;
    artifact.model = j.at("model").get<std::string>();
    const std::string lik = j.at("likelihood").get<std::string>();
    if (lik == "gaussian") {
        artifact.likelihood = gaussian_likelihood(j.at("noise_variance").get<double>());
    } else if (lik == "hetero") {
        artifact.likelihood = hetero_gaussian_likelihood();
    } else if (lik == "beta") {
        artifact.likelihood = beta_likelihood();
    } else {
        throw ValidationError("cli", "unknown likelihood tag \"" + lik + "\" in artifact");
    }
    if (artifact.model == "exact") {
        artifact.exact_x = detail::vector_from_json(j.at("train_x"));
        artifact.exact_y = detail::vector_from_json(j.at("train_y"));
        artifact.exact_offset = j.at("target_offset").get<double>();
        LatentBlock block;
        block.kernel = kernel_from_json(j.at("kernels").at(0));
        block.m = Eigen::VectorXd::Zero(1);
        block.L = Eigen::MatrixXd::Identity(1, 1);
        artifact.state.z = Eigen::VectorXd::Zero(1);
        artifact.state.latents.push_back(std::move(block));
    } else {
        artifact.state.z = detail::vector_from_json(j.at("inducing"));
        const Eigen::Index m = artifact.state.z.size();
        const auto& kernels = j.at("kernels");
        const auto& latents = j.at("latents");
        if (kernels.size() != latents.size()) {
            throw ValidationError("cli", "artifact kernels/latents length mismatch");
        }
        for (std::size_t k = 0; k < latents.size(); ++k) {
            LatentBlock block;
            block.kernel = kernel_from_json(kernels[k]);
            block.m = detail::vector_from_json(latents[k].at("m"));
            const auto& flat = latents[k].at("L");
            if (static_cast<Eigen::Index>(flat.size()) != m * (m + 1) / 2) {
                throw ValidationError("cli", "artifact L length mismatch");
            }
            block.L = Eigen::MatrixXd::Zero(m, m);
            std::size_t at = 0;
            for (Eigen::Index r = 0; r < m; ++r) {
                for (Eigen::Index c = 0; c <= r; ++c) block.L(r, c) = flat[at++].get<double>();
            }
            artifact.state.latents.push_back(std::move(block));
        }
    }
    const auto& norm = j.at("normalization");
    artifact.normalization = {norm.at("power_min").get<double>(),
                              norm.at("power_max").get<double>(),
                              norm.at("speed_min").get<double>(),
                              norm.at("speed_max").get<double>()};
    artifact.warp_epsilon = j.at("warp_epsilon").get<double>();
    artifact.interior_epsilon = j.at("interior_epsilon").get<double>();
    artifact.clipped_fraction = j.at("clipped_fraction").get<double>();
    artifact.train_seed = j.at("train_seed").get<std::uint64_t>();
    artifact.split_seed = j.at("split_seed").get<std::uint64_t>();
    const auto& cl = j.at("cleaning");
    artifact.cleaning = {cl.at("outlier_low").get<double>(),
                         cl.at("outlier_high").get<double>(),
                         cl.at("curtail_power").get<double>(),
                         cl.at("curtail_speed_quantile").get<double>(),
                         cl.at("high_power").get<double>(),
                         cl.at("interior_epsilon").get<double>()};
    validate_state(artifact.state);
    return artifact;
}

inline void save_artifact(const std::string& path, const ModelArtifact& artifact) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cli", "cannot write " + path);
    out << artifact_to_json(artifact).dump(2) << "\n";
}

inline ModelArtifact load_artifact(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cli", "cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError("cli", "malformed artifact JSON in " + path + ": " + e.what());
    }
    return artifact_from_json(j);
}

inline void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw IngestionError("cli", "cannot write " + path);
    std::fputs("iteration,elbo\n", f);
    for (const auto& point : trace) {
        std::fprintf(f, "%ld,", point.iteration);
        detail::write_double(f, point.elbo);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

}  // namespace powergp
