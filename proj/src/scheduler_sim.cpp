#include "ctxsense/scheduler_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ctxsense/info_loss.hpp"
#include "ctxsense/util.hpp"

namespace ctxsense {

std::string to_string(TimingMode mode) {
    switch (mode) {
        case TimingMode::Min: return "MIN";
        case TimingMode::Avg: return "AVG";
        case TimingMode::Max: return "MAX";
        case TimingMode::Never: return "NEVER";
    }
    throw std::logic_error("unknown timing mode");
}

TimingMode timing_mode_from_string(const std::string& s) {
    if (s == "MIN") return TimingMode::Min;
    if (s == "AVG") return TimingMode::Avg;
    if (s == "MAX") return TimingMode::Max;
    if (s == "NEVER") return TimingMode::Never;
    throw std::invalid_argument("unknown timing mode '" + s + "'");
}

std::optional<long> set_policy_timer(TimingMode mode, const SamplingPolicy& policy) {
    if (policy.distances.empty()) throw std::invalid_argument("set_policy_timer: empty policy");
    switch (mode) {
        case TimingMode::Max:
            return *std::max_element(policy.distances.begin(), policy.distances.end());
        case TimingMode::Min:
            return *std::min_element(policy.distances.begin(), policy.distances.end());
        case TimingMode::Avg: {
            const double mean =
                std::accumulate(policy.distances.begin(), policy.distances.end(), 0.0) /
                static_cast<double>(policy.distances.size());
            return std::llround(mean);
        }
        case TimingMode::Never:
            return std::nullopt;
    }
    throw std::logic_error("unknown timing mode");
}

std::vector<int> update_time_to_sample(const SamplingPolicy& policy,
                                       const std::optional<SamplingPolicy>& prev_policy,
                                       const std::vector<int>& time_to_sample) {
    if (!prev_policy) return policy.distances;
    if (prev_policy->distances.size() != policy.distances.size() ||
        time_to_sample.size() != policy.distances.size())
        throw std::invalid_argument("update_time_to_sample: dimension mismatch");
    if (*prev_policy == policy) return time_to_sample;

    std::vector<int> updated(policy.distances.size());
    for (std::size_t s = 0; s < policy.distances.size(); ++s) {
        if (time_to_sample[s] == 0) {
            updated[s] = policy.distances[s];
        } else {
            const int time_since_sampled = prev_policy->distances[s] - time_to_sample[s];
            updated[s] = std::max(0, policy.distances[s] - time_since_sampled);
        }
    }
    return updated;
}

namespace {

// Shared replay core: samples due sensors, scores the step, asks the policy
// hook for this step's decision, then advances the countdowns so a sensor
// sampled at step t with distance p is due again exactly at t + p.
struct ReplayAccounting {
    double total_cost = 0.0;
    double total_loss = 0.0;
    Eigen::VectorXd distance_sum;
    long steps = 0;
};

void check_trace_for_replay(const Trace& trace, const AutoencoderModel& model,
                            const Eigen::VectorXd& costs) {
    if (trace.records.empty()) throw std::invalid_argument("simulation: empty trace");
    if (static_cast<Eigen::Index>(trace.sensors.size()) != costs.size())
        throw std::invalid_argument("simulation: cost vector does not match sensor count");
    if (trace.records.front().values.size() != model.input_dim())
        throw std::invalid_argument("simulation: trace layout does not match context model");
}

}  // namespace

SimulationResult run_simulation(const Trace& test_trace, const AutoencoderModel& context_model,
                                const InfoLossModel& loss_model, const ObjectiveConfig& config,
                                TimingMode mode, StepLog* log) {
    check_trace_for_replay(test_trace, context_model, config.costs);
    const std::size_t m = test_trace.sensors.size();
    const auto offsets = feature_offsets(test_trace.sensors);
    const long steps = static_cast<long>(test_trace.records.size());

    std::vector<int> time_to_sample(m, 0);
    std::optional<long> policy_timer = 0;
    std::optional<SamplingPolicy> policy;
    std::optional<SamplingPolicy> prev_policy;
    Eigen::VectorXd last_sampled = test_trace.records.front().values;  // overwritten at t=0

    ReplayAccounting acc;
    acc.distance_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    long policy_changes = 0;

    for (long t = 0; t < steps; ++t) {
        const Eigen::VectorXd& truth = test_trace.records[static_cast<std::size_t>(t)].values;

        double step_cost = 0.0;
        std::vector<bool> sampled(m, false);
        for (std::size_t s = 0; s < m; ++s) {
            if (time_to_sample[s] == 0) {
                sampled[s] = true;
                const auto len = static_cast<Eigen::Index>(offsets[s + 1] - offsets[s]);
                last_sampled.segment(static_cast<Eigen::Index>(offsets[s]), len) =
                    truth.segment(static_cast<Eigen::Index>(offsets[s]), len);
                step_cost += config.costs[static_cast<Eigen::Index>(s)];
            }
        }

        const LatentContext degraded_context = encode(context_model, last_sampled);
        const LatentContext actual_context = encode(context_model, truth);
        const double step_loss = kl_divergence(actual_context, degraded_context);
        acc.total_cost += step_cost;
        acc.total_loss += step_loss;

        if (policy_timer && *policy_timer == 0) {
            prev_policy = policy;
            policy = optimize_policy(degraded_context, loss_model, config).second;
            time_to_sample = update_time_to_sample(*policy, prev_policy, time_to_sample);
            policy_timer = set_policy_timer(mode, *policy);
            ++policy_changes;
        }

        for (std::size_t s = 0; s < m; ++s)
            acc.distance_sum[static_cast<Eigen::Index>(s)] += policy->distances[s];

        // advance countdowns: a sensor sampled this step with distance p is
        // due again at t + p, so its end-of-step countdown is p - 1
        for (std::size_t s = 0; s < m; ++s) {
            if (time_to_sample[s] == 0) {
                time_to_sample[s] = sampled[s] ? policy->distances[s] - 1 : 0;
            } else {
                --time_to_sample[s];
            }
        }
        if (policy_timer) --*policy_timer;

        if (log)
            log->push_back({t, policy->distances, sampled, time_to_sample, step_cost, step_loss});
    }

    SimulationResult result;
    result.method = "dynamic";
    result.mode = to_string(mode);
    result.alpha = config.alpha;
    result.total_cost = acc.total_cost;
    result.total_info_loss = acc.total_loss;
    result.mean_distance = acc.distance_sum / static_cast<double>(steps);
    result.policy_change_count = policy_changes;
    result.steps = steps;
    return result;
}

void write_step_log_csv(const std::string& path, const std::vector<SensorSpec>& sensors,
                        const StepLog& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_step_log_csv: cannot open '" + path + "'");
    out << "t";
    for (const auto& s : sensors) out << ",policy." << s.name;
    for (const auto& s : sensors) out << ",sampled." << s.name;
    for (const auto& s : sensors) out << ",time_to_sample." << s.name;
    out << ",step_cost,step_loss\n";
    for (const auto& step : log) {
        out << step.t;
        for (int p : step.policy) out << "," << p;
        for (bool s : step.sampled) out << "," << (s ? 1 : 0);
        for (int t : step.time_to_sample_after) out << "," << t;
        out << "," << format_double(step.step_cost) << "," << format_double(step.step_loss) << "\n";
    }
    if (!out) throw std::runtime_error("write_step_log_csv: write to '" + path + "' failed");
}

double baseline_update_probability(double p, bool interesting, double alpha_param) {
    if (alpha_param <= 0.0 || alpha_param >= 1.0)
        throw std::invalid_argument("baseline_update_probability: alpha_param outside (0,1)");
    const double updated = interesting ? p + alpha_param * (1.0 - p) : p - alpha_param * p;
    return std::clamp(updated, 0.1, 0.9);
}

int baseline_distance(double p, int max_dist) {
    if (max_dist < 1) throw std::invalid_argument("baseline_distance: maxDist must be >= 1");
    const double mapped = max_dist - (p - 0.1) / 0.8 * (max_dist - 1);
    const int rounded = static_cast<int>(std::llround(mapped));
    return std::clamp(rounded, 1, max_dist);
}

double nearest_rank_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("nearest_rank_quantile: empty input");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("nearest_rank_quantile: q outside [0,1]");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

double compute_event_threshold(const Trace& warmup_trace, const AutoencoderModel& context_model,
                               double quantile) {
    if (warmup_trace.records.size() < 2)
        throw std::invalid_argument("compute_event_threshold: need at least 2 warmup records");
    std::vector<double> divergences;
    divergences.reserve(warmup_trace.records.size() - 1);
    LatentContext prev = encode(context_model, warmup_trace.records.front().values);
    for (std::size_t i = 1; i < warmup_trace.records.size(); ++i) {
        const LatentContext cur = encode(context_model, warmup_trace.records[i].values);
        divergences.push_back(kl_divergence(prev, cur));
        prev = cur;
    }
    return nearest_rank_quantile(std::move(divergences), quantile);
}

SimulationResult run_baseline(const Trace& test_trace, const AutoencoderModel& context_model,
                              const BaselineConfig& config, StepLog* log) {
    check_trace_for_replay(test_trace, context_model, config.costs);
    if (config.max_dist < 1) throw std::invalid_argument("run_baseline: maxDist must be >= 1");
    const std::size_t m = test_trace.sensors.size();
    const auto offsets = feature_offsets(test_trace.sensors);
    const long steps = static_cast<long>(test_trace.records.size());

    std::vector<double> probability(m, 0.5);
    std::vector<int> distance(m);
    for (std::size_t s = 0; s < m; ++s) distance[s] = baseline_distance(probability[s], config.max_dist);
    std::vector<int> time_to_sample(m, 0);
    Eigen::VectorXd last_sampled = test_trace.records.front().values;

    ReplayAccounting acc;
    acc.distance_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    long distance_changes = 0;

    for (long t = 0; t < steps; ++t) {
        const Eigen::VectorXd& truth = test_trace.records[static_cast<std::size_t>(t)].values;

        double step_cost = 0.0;
        std::vector<bool> sampled(m, false);
        for (std::size_t s = 0; s < m; ++s) {
            if (time_to_sample[s] == 0) {
                sampled[s] = true;
                const auto len = static_cast<Eigen::Index>(offsets[s + 1] - offsets[s]);
                last_sampled.segment(static_cast<Eigen::Index>(offsets[s]), len) =
                    truth.segment(static_cast<Eigen::Index>(offsets[s]), len);
                step_cost += config.costs[static_cast<Eigen::Index>(s)];
            }
        }

        const LatentContext degraded_context = encode(context_model, last_sampled);
        const LatentContext actual_context = encode(context_model, truth);
        const double step_loss = kl_divergence(actual_context, degraded_context);
        acc.total_cost += step_cost;
        acc.total_loss += step_loss;

        // a sensor's probability adapts only at its own sampling events,
        // since its data does not refresh in between
        bool changed = false;
        const bool interesting = step_loss > config.threshold;
        for (std::size_t s = 0; s < m; ++s) {
            if (!sampled[s]) continue;
            probability[s] = baseline_update_probability(probability[s], interesting,
                                                         config.alpha_param);
            const int mapped = baseline_distance(probability[s], config.max_dist);
            if (mapped != distance[s]) changed = true;
            distance[s] = mapped;
        }
        if (changed) ++distance_changes;

        for (std::size_t s = 0; s < m; ++s)
            acc.distance_sum[static_cast<Eigen::Index>(s)] += distance[s];

        for (std::size_t s = 0; s < m; ++s) {
            if (time_to_sample[s] == 0) {
                time_to_sample[s] = sampled[s] ? distance[s] - 1 : 0;
            } else {
                --time_to_sample[s];
            }
        }

        if (log) log->push_back({t, distance, sampled, time_to_sample, step_cost, step_loss});
    }

    SimulationResult result;
    result.method = "baseline";
    result.mode = "";
    result.alpha = config.alpha_param;
    result.total_cost = acc.total_cost;
    result.total_info_loss = acc.total_loss;
    result.mean_distance = acc.distance_sum / static_cast<double>(steps);
    result.policy_change_count = distance_changes;
    result.steps = steps;
    return result;
}

}  // namespace ctxsense
