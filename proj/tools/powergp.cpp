#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "powergp/cli.hpp"

namespace {

struct CommandArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

int dispatch(const std::string& command, const CommandArgs& args) {
    nlohmann::json config = nlohmann::json::object();
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) {
            throw powergp::IngestionError("cli", "cannot open config " + args.config_path);
        }
        try {
            in >> config;
        } catch (const nlohmann::json::exception& e) {
            throw powergp::IngestionError("cli", "malformed config JSON: " + std::string(e.what()));
        }
    }
    for (const auto& assignment : args.overrides) {
        powergp::apply_override(config, assignment);
    }
    return powergp::run(powergp::parse_run_config(config, command));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-process power curve models with bounded predictive distributions"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synth", "Generate a synthetic power-curve dataset"},
        {"train", "Train a model (standard | warped | hbp) on a dataset CSV"},
        {"evaluate", "Evaluate trained model artifacts on the test split"},
        {"predict", "Export predictions with a 95% band on a wind-speed grid"},
        {"report", "Merge per-model evaluation reports into one results table"},
    };
    std::map<std::string, CommandArgs> args;
    for (const auto& [name, description] : commands) {
        auto* sub = app.add_subcommand(name, description);
        sub->add_option("--config", args[name].config_path, "JSON configuration file");
        sub->add_option("--set", args[name].overrides,
                        "dotted-path override, e.g. --set train.iterations=500");
    }

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return dispatch(command, args[command]);
    } catch (const std::exception& e) {
        std::cerr << powergp::error_to_json(e).dump() << std::endl;
        return 1;
    }
}
