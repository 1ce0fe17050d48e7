#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxsense/latent_context.hpp"
#include "ctxsense/policy_optimizer.hpp"
#include "ctxsense/trace_model.hpp"

namespace ctxsense {

/// When to re-run policy determination: after the minimal / rounded-average /
/// maximal distance of the last policy, or never again after the first one.
enum class TimingMode { Min, Avg, Max, Never };

std::string to_string(TimingMode mode);
TimingMode timing_mode_from_string(const std::string& s);

/// Steps until the next policy decision; nullopt = never.
std::optional<long> set_policy_timer(TimingMode mode, const SamplingPolicy& policy);

/// Literal countdown reconciliation after a policy change: fresh sensors get
/// the new policy value, others keep their due time, clamped at "due now".
std::vector<int> update_time_to_sample(const SamplingPolicy& policy,
                                       const std::optional<SamplingPolicy>& prev_policy,
                                       const std::vector<int>& time_to_sample);

struct SimulationResult {
    std::string method;  // "dynamic" or "baseline"
    std::string mode;    // timing mode name; empty for the baseline
    double alpha = 0.0;  // loss weight, or the baseline adaptation parameter
    double total_cost = 0.0;
    double total_info_loss = 0.0;
    Eigen::VectorXd mean_distance;  // per sensor, in [1, maxDist]
    long policy_change_count = 0;
    long steps = 0;
};

/// Optional per-step log (verbose output and test oracles).
struct StepRecord {
    long t = 0;
    std::vector<int> policy;
    std::vector<bool> sampled;
    std::vector<int> time_to_sample_after;
    double step_cost = 0.0;
    double step_loss = 0.0;
};
using StepLog = std::vector<StepRecord>;

void write_step_log_csv(const std::string& path, const std::vector<SensorSpec>& sensors,
                        const StepLog& log);

/// Replay the trace under dynamically optimized policies: each step samples
/// the sensors whose countdown hit zero, scores KL(actual context || context
/// of the record assembled from last-sampled values), and re-optimizes the
/// policy from the degraded context whenever the mode's timer expires.
SimulationResult run_simulation(const Trace& test_trace, const AutoencoderModel& context_model,
                                const InfoLossModel& loss_model, const ObjectiveConfig& config,
                                TimingMode mode, StepLog* log = nullptr);

/// Probability-adaptive baseline: raise p on interesting events, decay it
/// otherwise, clamped to [0.1, 0.9].
double baseline_update_probability(double p, bool interesting, double alpha_param);

/// Affine probability-to-distance map: p=0.9 -> 1, p=0.1 -> maxDist.
int baseline_distance(double p, int max_dist);

/// Nearest-rank quantile (ascending sort, rank = ceil(q*n)).
double nearest_rank_quantile(std::vector<double> values, double q);

/// Interesting-event threshold: the q-quantile of KL divergences between the
/// contexts of consecutive warmup records.
double compute_event_threshold(const Trace& warmup_trace, const AutoencoderModel& context_model,
                               double quantile = 0.9);

struct BaselineConfig {
    double alpha_param = 0.5;  // in (0, 1)
    int max_dist = 1;
    Eigen::VectorXd costs;
    double threshold = 0.0;  // KL units; from compute_event_threshold
};

/// Replay the trace under the per-sensor probability-adaptive policy, with
/// cost/loss accounting identical to run_simulation.
SimulationResult run_baseline(const Trace& test_trace, const AutoencoderModel& context_model,
                              const BaselineConfig& config, StepLog* log = nullptr);

}  // namespace ctxsense
