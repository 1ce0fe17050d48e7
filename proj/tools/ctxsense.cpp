#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ctxsense/experiment.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string seed;
    int parallel = -1;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Experiment config JSON")->required();
    cmd->add_option("--out", flags.out_dir, "Output directory (overrides config)");
    cmd->add_option("--seed", flags.seed, "Master seed (overrides config)");
    cmd->add_option("--parallel", flags.parallel, "Worker pool size (overrides config)");
    cmd->add_flag("--verbose", flags.verbose, "Chatty progress output");
}

ctxsense::ExperimentConfig resolve_config(const CommonFlags& flags) {
    auto config = ctxsense::load_experiment_config(flags.config_path);
    if (!flags.out_dir.empty()) config.output_dir = flags.out_dir;
    if (config.output_dir.empty()) {
        if (const char* env = std::getenv("CTXSENSE_OUT")) config.output_dir = env;
    }
    if (!flags.seed.empty()) config.seed = std::stoull(flags.seed);
    if (flags.parallel >= 0) config.parallelism = flags.parallel;
    config.verbose = flags.verbose;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ctxsense: dynamic cost-aware sensing simulator"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto* run = app.add_subcommand("run", "Full pipeline: train, simulate the grid, evaluate");
    add_common(run, flags);
    const std::vector<std::string> stage_names{"generate", "extend", "train-context",
                                               "train-loss", "simulate", "evaluate"};
    for (const auto& name : stage_names)
        add_common(app.add_subcommand(name, "Run only the '" + name + "' stage"), flags);

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const auto config = resolve_config(flags);
        if (flags.verbose)
            std::cerr << "ctxsense: " << command << " -> " << config.output_dir << "\n";
        if (command == "run") {
            ctxsense::cmd_run(config);
        } else {
            ctxsense::cmd_stage(ctxsense::stage_from_string(command), config);
        }
    } catch (const std::exception& e) {
        std::cerr << "ctxsense " << command << ": error: " << e.what() << "\n";
        return 1;
    }
    if (flags.verbose) std::cerr << "ctxsense: " << command << " done\n";
    return 0;
}
