#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "powergp/data.hpp"
#include "powergp/exact_gp.hpp"
#include "powergp/errors.hpp"
#include "powergp/hbp.hpp"
#include "powergp/kernel.hpp"
#include "powergp/metrics.hpp"
#include "powergp/model_io.hpp"
#include "powergp/svgp.hpp"
#include "powergp/warped.hpp"

namespace powergp {

struct PredictOptions {
    HbpMode mode = HbpMode::sample;
    int samples = 1000;
    std::uint64_t seed = 0;
    int grid_points = 200;
    std::optional<double> grid_min;
    std::optional<double> grid_max;
};

/// Fully resolved run configuration: one command per process, all seeds
/// explicit (deterministic defaults, never wall clock).
struct RunConfig {
    std::string command;
    std::string model = "standard";  // standard | warped | hbp | exact (debugging)

    std::string data_input;
    std::string out_dataset;
    std::string out_truth;
    std::string out_artifact;
    std::string out_trace;
    std::string out_report;
    std::string out_results;
    std::string out_predictions;
    std::vector<std::string> artifacts;
    std::vector<std::string> reports;

    TrainConfig train;
    int inducing_count = 50;
    double noise_variance = 0.0;  // initial Gaussian noise; <= 0 estimates from the data
    std::uint64_t split_seed = 0;
    WarpConfig warp;
    SynthConfig synth;
    CleaningRules cleaning;
    std::vector<KernelSpec> kernels;  // per latent; empty uses the default
    PredictOptions predict;
};

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(const nlohmann::json& j) : root_(j) {}

    template <typename T>
    void read(const nlohmann::json& obj, const char* key, T& out, const char* context) {
        if (!obj.contains(key)) return;
        try {
            out = obj.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            issues_.push_back(std::string(context) + "." + key + ": wrong type");
        }
    }

    void require(bool present, const std::string& what) {
        if (!present) issues_.push_back(what);
    }

    void add_issue(std::string what) { issues_.push_back(std::move(what)); }

    void finish() const {
        if (issues_.empty()) return;
        std::ostringstream msg;
        msg << "invalid configuration:";
        for (const auto& issue : issues_) msg << "\n  - " << issue;
        throw ValidationError("cli", msg.str());
    }

    const nlohmann::json& root() const { return root_; }

private:
    const nlohmann::json& root_;
    std::vector<std::string> issues_;
};

inline int model_latent_count(const std::string& model) {
    return model == "standard" || model == "exact" ? 1 : 2;
}

}  // namespace detail

/// Parses the JSON config into a RunConfig for the given command, collecting
/// every violated field before failing.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::string& command) {
    RunConfig cfg;
    cfg.command = command;
    detail::ConfigReader reader(j);

    if (j.contains("command")) {
        const auto declared = j.at("command").is_string() ? j.at("command").get<std::string>() : "";
        if (declared != command) {
            reader.add_issue("command: config declares \"" + declared +
                             "\" but the CLI invoked \"" + command + "\"");
        }
    }
    reader.read(j, "model", cfg.model, "config");
    if (cfg.model != "standard" && cfg.model != "warped" && cfg.model != "hbp" &&
        cfg.model != "exact") {
        reader.add_issue("model: must be one of standard, warped, hbp, exact");
    }
    if (j.contains("data")) {
        reader.read(j.at("data"), "input", cfg.data_input, "data");
    }
    if (j.contains("out")) {
        const auto& out = j.at("out");
        reader.read(out, "dataset", cfg.out_dataset, "out");
        reader.read(out, "truth", cfg.out_truth, "out");
        reader.read(out, "artifact", cfg.out_artifact, "out");
        reader.read(out, "trace", cfg.out_trace, "out");
        reader.read(out, "report", cfg.out_report, "out");
        reader.read(out, "results", cfg.out_results, "out");
        reader.read(out, "predictions", cfg.out_predictions, "out");
    }
    if (j.contains("artifact") && j.at("artifact").is_string()) {
        cfg.artifacts.push_back(j.at("artifact").get<std::string>());
    }
    if (j.contains("artifacts")) {
        reader.read(j, "artifacts", cfg.artifacts, "config");
    }
    if (j.contains("reports")) {
        reader.read(j, "reports", cfg.reports, "config");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reader.read(t, "minibatch", cfg.train.minibatch_size, "train");
        reader.read(t, "iterations", cfg.train.iterations, "train");
        reader.read(t, "learning_rate", cfg.train.learning_rate, "train");
        reader.read(t, "quadrature_points", cfg.train.quadrature_points, "train");
        reader.read(t, "seed", cfg.train.seed, "train");
        reader.read(t, "inducing_count", cfg.inducing_count, "train");
        reader.read(t, "noise_variance", cfg.noise_variance, "train");
    }
    reader.read(j, "split_seed", cfg.split_seed, "config");
    if (j.contains("warp")) {
        reader.read(j.at("warp"), "epsilon", cfg.warp.epsilon, "warp");
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        reader.read(s, "n", cfg.synth.n, "synth");
        reader.read(s, "cut_in", cfg.synth.cut_in, "synth");
        reader.read(s, "rated_onset", cfg.synth.rated_onset, "synth");
        reader.read(s, "steepness", cfg.synth.steepness, "synth");
        reader.read(s, "concentration_peak", cfg.synth.concentration_peak, "synth");
        reader.read(s, "concentration_floor", cfg.synth.concentration_floor, "synth");
        reader.read(s, "seed", cfg.synth.seed, "synth");
    }
    if (j.contains("cleaning")) {
        const auto& c = j.at("cleaning");
        reader.read(c, "outlier_low", cfg.cleaning.outlier_low, "cleaning");
        reader.read(c, "outlier_high", cfg.cleaning.outlier_high, "cleaning");
        reader.read(c, "curtail_power", cfg.cleaning.curtail_power, "cleaning");
        reader.read(c, "curtail_speed_quantile", cfg.cleaning.curtail_speed_quantile, "cleaning");
        reader.read(c, "high_power", cfg.cleaning.high_power, "cleaning");
        reader.read(c, "interior_epsilon", cfg.cleaning.interior_epsilon, "cleaning");
    }
    if (j.contains("kernels")) {
        const auto& ks = j.at("kernels");
        if (ks.is_array()) {
            for (const auto& k : ks) {
                try {
                    cfg.kernels.push_back(kernel_from_json(k));
                } catch (const Error& e) {
                    reader.add_issue(std::string("kernels: ") + e.what());
                }
            }
        } else if (ks.is_object()) {
            try {
                cfg.kernels.push_back(kernel_from_json(ks));
            } catch (const Error& e) {
                reader.add_issue(std::string("kernels: ") + e.what());
            }
        } else {
            reader.add_issue("kernels: must be an object or array of kernel configs");
        }
    }
    if (j.contains("predict")) {
        const auto& p = j.at("predict");
        std::string mode = "sample";
        reader.read(p, "mode", mode, "predict");
        if (mode == "moment") {
            cfg.predict.mode = HbpMode::moment;
        } else if (mode == "sample") {
            cfg.predict.mode = HbpMode::sample;
        } else {
            reader.add_issue("predict.mode: must be moment or sample");
        }
        reader.read(p, "samples", cfg.predict.samples, "predict");
        reader.read(p, "seed", cfg.predict.seed, "predict");
        reader.read(p, "grid_points", cfg.predict.grid_points, "predict");
        if (p.contains("grid_min") && p.at("grid_min").is_number()) {
            cfg.predict.grid_min = p.at("grid_min").get<double>();
        }
        if (p.contains("grid_max") && p.at("grid_max").is_number()) {
            cfg.predict.grid_max = p.at("grid_max").get<double>();
        }
    }

    // per-command required fields
    if (command == "synth") {
        reader.require(!cfg.out_dataset.empty(), "out.dataset: required for synth");
    } else if (command == "train") {
        reader.require(!cfg.data_input.empty(), "data.input: required for train");
        reader.require(!cfg.out_artifact.empty(), "out.artifact: required for train");
    } else if (command == "evaluate") {
        reader.require(!cfg.data_input.empty(), "data.input: required for evaluate");
        reader.require(!cfg.artifacts.empty(), "artifact(s): required for evaluate");
        reader.require(!cfg.out_report.empty() || !cfg.out_results.empty(),
                       "out.report or out.results: required for evaluate");
    } else if (command == "predict") {
        reader.require(!cfg.artifacts.empty(), "artifact: required for predict");
        reader.require(!cfg.out_predictions.empty(), "out.predictions: required for predict");
    } else if (command == "report") {
        reader.require(!cfg.reports.empty(), "reports: required for report");
        reader.require(!cfg.out_results.empty(), "out.results: required for report");
    } else {
        reader.add_issue("command: must be one of synth, train, evaluate, predict, report");
    }
    const int latents = detail::model_latent_count(cfg.model);
    if (!cfg.kernels.empty() && cfg.kernels.size() != 1 &&
        static_cast<int>(cfg.kernels.size()) != latents) {
        reader.add_issue("kernels: provide one kernel (shared) or one per latent");
    }
    reader.finish();
    return cfg;
}

/// Applies a `--set key=value` override onto the raw config JSON. Keys use
/// dotted paths; values parse as JSON when possible, else as strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError("cli", "--set expects key=value, got \"" + assignment + "\"");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }
    nlohmann::json* at = &j;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) {
            throw ValidationError("cli", "--set key has an empty path segment: " + path);
        }
        if (dot == std::string::npos) {
            (*at)[key] = value;
            break;
        }
        at = &(*at)[key];
        start = dot + 1;
    }
}

namespace detail {

inline std::vector<KernelSpec> resolve_kernels(const RunConfig& cfg, int latents) {
    std::vector<KernelSpec> out;
    for (int i = 0; i < latents; ++i) {
        if (cfg.kernels.empty()) {
            out.push_back(default_kernel());
        } else if (cfg.kernels.size() == 1) {
            out.push_back(cfg.kernels.front());
        } else {
            out.push_back(cfg.kernels[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

inline ScadaDataset load_and_split(const std::string& path, const CleaningRules& rules,
                                   std::uint64_t split_seed) {
    auto loaded = load_scada_csv(path);
    auto pre = preprocess(std::move(loaded.records), rules);
    split_three(pre.dataset, split_seed);
    return std::move(pre.dataset);
}

inline Eigen::VectorXd prediction_grid(const ModelArtifact& artifact, const PredictOptions& opt) {
    if (opt.grid_points < 2) {
        throw ValidationError("cli", "prediction grid needs at least 2 points");
    }
    const double lo = opt.grid_min.value_or(artifact.normalization.speed_min);
    const double hi = opt.grid_max.value_or(artifact.normalization.speed_max);
    if (!(lo < hi)) {
        throw ValidationError("cli", "prediction grid bounds must satisfy min < max");
    }
    return Eigen::VectorXd::LinSpaced(opt.grid_points, lo, hi);
}

inline EvaluationReport evaluate_artifact(const ModelArtifact& artifact,
                                          const ScadaDataset& dataset,
                                          const PredictOptions& predict) {
    const auto [x_test, y_test] = dataset.xy(Split::test);
    if (x_test.size() < 2) {
        throw InsufficientDataError("cli", "test split has fewer than 2 points");
    }
    EvaluationReport report;
    report.model_name = artifact.model;
    report.n_test = static_cast<long>(x_test.size());
    if (artifact.model == "standard") {
        const Marginals m = latent_marginals(artifact.state, 0, x_test);
        report.nmse = nmse(y_test, m.mean);
        report.jll = jll_standard(artifact.state, artifact.likelihood, x_test, y_test);
        report.space = "original";
    } else if (artifact.model == "exact") {
        const auto* g = std::get_if<GaussianLikelihood>(&artifact.likelihood.node);
        if (g == nullptr) {
            throw ValidationError("cli", "exact artifact must carry a Gaussian likelihood");
        }
        const ExactGPModel model(artifact.state.latents.at(0).kernel, g->noise_variance,
                                 artifact.exact_x, artifact.exact_y, artifact.exact_offset);
        const auto post = model.posterior(x_test, true);
        report.nmse = nmse(y_test, post.mean);
        report.jll = jll_gaussian(post.mean, post.variance, y_test);
        report.space = "original";
    } else if (artifact.model == "hbp") {
        long clipped = 0;
        const Eigen::VectorXd y_open = interior_map(y_test, artifact.interior_epsilon, &clipped);
        HbpPredictConfig pc{predict.mode, predict.samples, predict.seed};
        const auto preds = hbp_predict(artifact.state, x_test, pc);
        Eigen::VectorXd means(x_test.size());
        for (Eigen::Index i = 0; i < x_test.size(); ++i) {
            means[i] = preds[static_cast<std::size_t>(i)].mean;
        }
        report.nmse = nmse(y_test, means);
        report.jll = jll_hbp(preds, y_open);
        report.space = "original";
        report.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(y_test.size());
    } else if (artifact.model == "warped") {
        WarpedModel model;
        model.state = artifact.state;
        model.warp.epsilon = artifact.warp_epsilon;
        model.clipped_fraction = artifact.clipped_fraction;
        const auto preds = warped_predict(model, x_test);
        Eigen::VectorXd means(x_test.size());
        for (Eigen::Index i = 0; i < x_test.size(); ++i) {
            means[i] = preds[static_cast<std::size_t>(i)].mean;
        }
        report.nmse = nmse(y_test, means);
        const WarpedJll jll = jll_warped(model, x_test, y_test);
        report.jll = jll.warped_space;
        report.space = "warped";
        report.clipped_fraction =
            static_cast<double>(jll.clipped) / static_cast<double>(y_test.size());
    } else {
        throw ValidationError("cli", "unknown model \"" + artifact.model + "\" in artifact");
    }
    return report;
}

inline nlohmann::json report_to_json(const EvaluationReport& report) {
    return {{"model", report.model_name},    {"nmse", report.nmse},
            {"jll", report.jll},             {"space", report.space},
            {"n_test", report.n_test},       {"clipped_fraction", report.clipped_fraction}};
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
    EvaluationReport report;
    report.model_name = j.at("model").get<std::string>();
    report.nmse = j.at("nmse").get<double>();
    report.jll = j.at("jll").get<double>();
    report.space = j.at("space").get<std::string>();
    report.n_test = j.at("n_test").get<long>();
    report.clipped_fraction = j.at("clipped_fraction").get<double>();
    return report;
}

inline void write_results_csv(const std::string& path,
                              const std::vector<EvaluationReport>& reports) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw IngestionError("cli", "cannot write " + path);
    std::fputs("Model,NMSE,JLL,Space\n", f);
    for (const auto& r : reports) {
        std::fprintf(f, "%s,", r.model_name.c_str());
        write_double(f, r.nmse);
        std::fputc(',', f);
        write_double(f, r.jll);
        std::fprintf(f, ",%s\n", r.space.c_str());
    }
    std::fclose(f);
}

}  // namespace detail

inline int cmd_synth(const RunConfig& cfg) {
    const auto result = synth_generate(cfg.synth);
    write_dataset_csv(cfg.out_dataset, result.dataset.records);
    if (!cfg.out_truth.empty()) write_truth_csv(cfg.out_truth, result.truth);
    return 0;
}

inline int cmd_train(const RunConfig& cfg) {
    ScadaDataset dataset = detail::load_and_split(cfg.data_input, cfg.cleaning, cfg.split_seed);
    const auto [x_train, y_train] = dataset.xy(Split::train);
    if (x_train.size() < 2) {
        throw InsufficientDataError("cli", "train split has fewer than 2 points");
    }
    TrainConfig train_cfg = cfg.train;
    train_cfg.minibatch_size =
        std::min<int>(train_cfg.minibatch_size, static_cast<int>(x_train.size()));

    ModelArtifact artifact;
    artifact.model = cfg.model;
    artifact.normalization = dataset.normalization;
    artifact.warp_epsilon = cfg.warp.epsilon;
    artifact.interior_epsilon = cfg.cleaning.interior_epsilon;
    artifact.train_seed = train_cfg.seed;
    artifact.split_seed = cfg.split_seed;
    artifact.cleaning = cfg.cleaning;

    std::vector<TracePoint> trace;
    const int latents = detail::model_latent_count(cfg.model);
    auto kernels = detail::resolve_kernels(cfg, latents);
    if (cfg.model == "exact") {
        // dense reference model, intended for small debugging datasets;
        // uses its own optimizer defaults (step 0.05, 500 iterations)
        const double noise = cfg.noise_variance > 0.0 ? cfg.noise_variance : 0.01;
        auto fitted = fit_exact(ExactGPModel::with_centered_targets(
            std::move(kernels.front()), noise, x_train, y_train));
        artifact.likelihood = gaussian_likelihood(fitted.model.noise_variance());
        artifact.exact_x = fitted.model.train_x();
        artifact.exact_y = fitted.model.train_y();
        artifact.exact_offset = fitted.model.target_offset();
        LatentBlock block;
        block.kernel = fitted.model.kernel();
        block.m = Eigen::VectorXd::Zero(1);
        block.L = Eigen::MatrixXd::Identity(1, 1);
        artifact.state.z = Eigen::VectorXd::Zero(1);
        artifact.state.latents.push_back(std::move(block));
        trace.push_back({0, -fitted.initial_nlml});
        trace.push_back({1, -fitted.final_nlml});
    } else if (cfg.model == "warped") {
        auto model = warped_fit(x_train, y_train, std::move(kernels), cfg.warp, train_cfg,
                                cfg.inducing_count);
        artifact.state = std::move(model.state);
        artifact.likelihood = hetero_gaussian_likelihood();
        artifact.clipped_fraction = model.clipped_fraction;
        trace = std::move(model.trace);
    } else {
        const Eigen::VectorXd z = default_inducing_points(x_train, cfg.inducing_count);
        Eigen::VectorXd targets = y_train;
        LikelihoodSpec lik = gaussian_likelihood(1.0);  // placeholder, set below
        if (cfg.model == "hbp") {
            long clipped = 0;
            targets = interior_map(y_train, cfg.cleaning.interior_epsilon, &clipped);
            artifact.clipped_fraction =
                static_cast<double>(clipped) / static_cast<double>(y_train.size());
            lik = beta_likelihood();
        }
        auto init = make_data_init_state(std::move(kernels), z, x_train, targets,
                                         cfg.model == "hbp" ? lik : gaussian_likelihood(1.0));
        if (cfg.model == "standard") {
            // noise_variance <= 0 requests a data-driven starting value
            lik = gaussian_likelihood(cfg.noise_variance > 0.0 ? cfg.noise_variance
                                                               : init.suggested_noise);
        }
        auto result = train_svgp(std::move(init.state), lik, x_train, targets, train_cfg);
        artifact.state = std::move(result.state);
        artifact.likelihood = result.likelihood;
        trace = std::move(result.trace);
    }
    save_artifact(cfg.out_artifact, artifact);
    if (!cfg.out_trace.empty()) write_trace_csv(cfg.out_trace, trace);
    return 0;
}

inline int cmd_evaluate(const RunConfig& cfg) {
    std::vector<EvaluationReport> reports;
    for (const auto& path : cfg.artifacts) {
        const ModelArtifact artifact = load_artifact(path);
        ScadaDataset dataset =
            detail::load_and_split(cfg.data_input, artifact.cleaning, artifact.split_seed);
        reports.push_back(detail::evaluate_artifact(artifact, dataset, cfg.predict));
    }
    if (!cfg.out_report.empty()) {
        nlohmann::json j;
        if (reports.size() == 1) {
            j = detail::report_to_json(reports.front());
        } else {
            j = nlohmann::json::array();
            for (const auto& r : reports) j.push_back(detail::report_to_json(r));
        }
        std::ofstream out(cfg.out_report);
        if (!out) throw IngestionError("cli", "cannot write " + cfg.out_report);
        out << j.dump(2) << "\n";
    }
    if (!cfg.out_results.empty()) detail::write_results_csv(cfg.out_results, reports);
    return 0;
}

inline int cmd_predict(const RunConfig& cfg) {
    const ModelArtifact artifact = load_artifact(cfg.artifacts.front());
    const Eigen::VectorXd grid = detail::prediction_grid(artifact, cfg.predict);
    Eigen::VectorXd x_norm(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        x_norm[i] = artifact.normalization.normalize_speed(grid[i]);
    }
    std::FILE* f = std::fopen(cfg.out_predictions.c_str(), "wb");
    if (f == nullptr) throw IngestionError("cli", "cannot write " + cfg.out_predictions);
    if (artifact.model == "standard" || artifact.model == "exact") {
        const auto* g = std::get_if<GaussianLikelihood>(&artifact.likelihood.node);
        if (g == nullptr) {
            std::fclose(f);
            throw ValidationError("cli", "Gaussian-model artifact must carry a Gaussian likelihood");
        }
        Eigen::VectorXd mean;
        Eigen::VectorXd variance;
        if (artifact.model == "exact") {
            const ExactGPModel model(artifact.state.latents.at(0).kernel, g->noise_variance,
                                     artifact.exact_x, artifact.exact_y, artifact.exact_offset);
            auto post = model.posterior(x_norm, true);
            mean = std::move(post.mean);
            variance = std::move(post.variance);
        } else {
            Marginals m = latent_marginals(artifact.state, 0, x_norm);
            mean = std::move(m.mean);
            variance = m.variance.array() + g->noise_variance;
        }
        std::fputs("x,mean,lower95,upper95\n", f);
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            const double sd = std::sqrt(variance[i]);
            detail::write_double(f, grid[i]);
            std::fputc(',', f);
            detail::write_double(f, mean[i]);
            std::fputc(',', f);
            detail::write_double(f, mean[i] - 1.959963984540054 * sd);
            std::fputc(',', f);
            detail::write_double(f, mean[i] + 1.959963984540054 * sd);
            std::fputc('\n', f);
        }
    } else if (artifact.model == "hbp") {
        HbpPredictConfig pc{cfg.predict.mode, cfg.predict.samples, cfg.predict.seed};
        const auto preds = hbp_predict(artifact.state, x_norm, pc);
        std::fputs("x,mean,lower95,upper95,alpha,beta\n", f);
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            const auto& p = preds[static_cast<std::size_t>(i)];
            detail::write_double(f, grid[i]);
            for (double v : {p.mean, p.lower95, p.upper95, p.alpha_star, p.beta_star}) {
                std::fputc(',', f);
                detail::write_double(f, v);
            }
            std::fputc('\n', f);
        }
    } else if (artifact.model == "warped") {
        WarpedModel model;
        model.state = artifact.state;
        model.warp.epsilon = artifact.warp_epsilon;
        model.clipped_fraction = artifact.clipped_fraction;
        const auto preds = warped_predict(model, x_norm);
        std::fputs("# clipped_fraction=", f);
        detail::write_double(f, artifact.clipped_fraction);
        std::fputs("\nx,mean,lower,upper,warped_mean,warped_sd\n", f);
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            const auto& p = preds[static_cast<std::size_t>(i)];
            detail::write_double(f, grid[i]);
            for (double v : {p.mean, p.lower, p.upper, p.warped_mean, p.warped_sd}) {
                std::fputc(',', f);
                detail::write_double(f, v);
            }
            std::fputc('\n', f);
        }
    } else {
        std::fclose(f);
        throw ValidationError("cli", "unknown model \"" + artifact.model + "\" in artifact");
    }
    std::fclose(f);
    return 0;
}

inline int cmd_report(const RunConfig& cfg) {
    std::vector<EvaluationReport> reports;
    for (const auto& path : cfg.reports) {
        std::ifstream in(path);
        if (!in) throw IngestionError("cli", "cannot open " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IngestionError("cli", "malformed report JSON in " + path + ": " + e.what());
        }
        if (j.is_array()) {
            for (const auto& r : j) reports.push_back(detail::report_from_json(r));
        } else {
            reports.push_back(detail::report_from_json(j));
        }
    }
    detail::write_results_csv(cfg.out_results, reports);
    return 0;
}

/// Dispatches one command. Throws powergp::Error on failure; the binary
/// maps that to a machine-readable JSON report on stderr.
inline int run(const RunConfig& cfg) {
    if (cfg.command == "synth") return cmd_synth(cfg);
    if (cfg.command == "train") return cmd_train(cfg);
    if (cfg.command == "evaluate") return cmd_evaluate(cfg);
    if (cfg.command == "predict") return cmd_predict(cfg);
    if (cfg.command == "report") return cmd_report(cfg);
    throw ValidationError("cli", "unknown command \"" + cfg.command + "\"");
}

inline nlohmann::json error_to_json(const std::exception& e) {
    nlohmann::json j;
    j["error"]["message"] = e.what();
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        j["error"]["module"] = err->module();
        j["error"]["kind"] = err->kind();
        if (const auto* sup = dynamic_cast<const SupportError*>(&e)) {
            j["error"]["indices"] = sup->indices();
        }
        if (const auto* num = dynamic_cast<const NumericalError*>(&e)) {
            j["error"]["jitter_levels"] = num->jitter_levels();
        }
        if (const auto* ing = dynamic_cast<const IngestionError*>(&e)) {
            j["error"]["row"] = ing->row();
        }
    } else {
        j["error"]["module"] = "cli";
        j["error"]["kind"] = "internal";
    }
    return j;
}

}  // namespace powergp
