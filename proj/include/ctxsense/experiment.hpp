#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxsense/data_extension.hpp"
#include "ctxsense/evaluation.hpp"
#include "ctxsense/info_loss.hpp"
#include "ctxsense/latent_context.hpp"
#include "ctxsense/scheduler_sim.hpp"
#include "ctxsense/trace_model.hpp"

namespace ctxsense {

/// One JSON config drives the whole experiment grid; CLI flags only override
/// single keys. See configs/demo.json for the schema.
struct ExperimentConfig {
    std::string output_dir;
    std::uint64_t seed = 42;
    int parallelism = 0;  // 0 = hardware concurrency
    bool verbose = false;

    // trace source: synthetic generator or per-user CSV files
    bool synthetic = true;
    std::vector<std::string> csv_paths;
    int users = 1;
    long n_records = 3000;
    int n_regimes = 3;
    double switch_prob = 0.02;
    double noise_std = 0.3;

    std::vector<SensorSpec> sensors;
    ExtensionConfig extension;
    AutoencoderConfig autoencoder;
    LassoConfig lasso;
    std::vector<double> alphas;
    std::vector<TimingMode> modes;
    double train_fraction = 0.7;
    double baseline_alpha_param = 0.5;
    double baseline_quantile = 0.9;
    double nemenyi_q_alpha = 2.569;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);

/// Resolved, key-sorted JSON dump of the config; hashed into the manifest.
std::string canonical_config_json(const ExperimentConfig& config);

int user_count(const ExperimentConfig& config);

/// The user's trace, either generated from the seeded model or loaded from CSV.
Trace user_trace(const ExperimentConfig& config, int user_index);

/// Train/test split on the record axis (first fraction trains the models).
std::pair<Trace, Trace> split_trace(const Trace& trace, double train_fraction);

/// Everything learned from one user's training prefix.
struct UserModels {
    AutoencoderModel context_model;
    InfoLossModel loss_model;
    double event_threshold = 0.0;
    Trace train;
    Trace test;
};

UserModels train_user_models(const Trace& full_trace, const ExperimentConfig& config);

/// All (alpha, mode) cells plus the baseline for one user, in config order.
/// With config.verbose set, per-step logs land next to the results.
std::vector<SimulationResult> simulate_user_grid(const UserModels& models,
                                                 const ExperimentConfig& config, int user);

struct UserResult {
    int user = 0;
    SimulationResult result;
};

/// Results CSV: `user,method,alpha,mode,total_cost,total_info_loss,policy_changes,mean_dist.<sensor>...`
void write_results_csv(const std::string& path, const std::vector<UserResult>& results,
                       const std::vector<SensorSpec>& sensors);
std::vector<UserResult> read_results_csv(const std::string& path,
                                         const std::vector<SensorSpec>& sensors);

/// Rank table, Friedman/Iman-Davenport + Nemenyi summary, pairwise
/// significance, and the alpha trade-off curve, all written as CSV.
void evaluate_results(const std::vector<UserResult>& results, const ExperimentConfig& config,
                      const std::string& out_dir);

/// Pipeline stages (resumable; each reads the previous stage's files).
enum class Stage { Generate, Extend, TrainContext, TrainLoss, Simulate, Evaluate };
Stage stage_from_string(const std::string& s);

/// Run one stage against the config's output directory. Missing upstream
/// artifacts are reported by file name.
void cmd_stage(Stage stage, const ExperimentConfig& config);

/// Full pipeline in memory: per user train + simulate every cell and the
/// baseline, then write results, evaluation tables, persisted models, and the
/// run manifest. Rerunning with the same config verifies the manifest.
void cmd_run(const ExperimentConfig& config);

}  // namespace ctxsense
