#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace ctxsense {

/// One physical sensor: a named group of features with a per-sample energy cost.
struct SensorSpec {
    std::string name;
    std::vector<std::string> feature_names;
    double cost = 0.0;  // abstract energy units per sample, >= 0
};

/// One record on the base sampling grid. Timestamps are integer interval
/// indices; all distances downstream are integer multiples of this unit.
struct TraceRecord {
    long timestamp = 0;
    Eigen::VectorXd values;  // sensor-then-feature order
};

struct Trace {
    std::vector<SensorSpec> sensors;
    std::vector<TraceRecord> records;
};

std::size_t total_feature_count(const std::vector<SensorSpec>& sensors);

/// Start offset of each sensor's feature block, plus a trailing total.
std::vector<std::size_t> feature_offsets(const std::vector<SensorSpec>& sensors);

Eigen::VectorXd sensor_costs(const std::vector<SensorSpec>& sensors);

void validate_layout(const std::vector<SensorSpec>& sensors);

/// Per-feature mean/std of a fitting trace. Stds are population stds floored
/// at 1e-6 so constant features standardize to zero instead of blowing up.
struct StandardizationStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
};

constexpr double kStdFloor = 1e-6;

StandardizationStats fit_standardization(const Trace& trace);
Trace apply_standardization(const Trace& trace, const StandardizationStats& stats);
Eigen::VectorXd standardize_values(const Eigen::VectorXd& values, const StandardizationStats& stats);
Eigen::VectorXd unstandardize_values(const Eigen::VectorXd& values, const StandardizationStats& stats);

/// Stats with mean 0 / std 1, for models trained on already-standardized data.
StandardizationStats identity_stats(std::size_t dim);

/// Parse a trace CSV (`timestamp,<sensor>.<feature>,...`). Records are sorted
/// ascending; duplicate or gapped timestamps and malformed cells are errors
/// reported with the offending file line.
Trace load_trace(const std::string& path, const std::vector<SensorSpec>& layout);

void write_trace(const std::string& path, const Trace& trace);

/// Seeded regime-switching Gaussian generator: a hidden regime index evolves
/// as a Markov chain (stay with prob 1-switch_prob, else jump uniformly over
/// all regimes) and each record is the regime's fixed per-feature mean plus
/// N(0, noise_std) noise. Pure function of its arguments.
struct SyntheticTraceConfig {
    long n_records = 1;
    int n_regimes = 1;
    double switch_prob = 0.0;
    double noise_std = 0.1;
    std::uint64_t seed = 0;
};

struct SyntheticTrace {
    Trace trace;
    std::vector<int> regimes;         // hidden regime per record (test oracle input)
    Eigen::MatrixXd regime_means;     // n_regimes x total_features
};

SyntheticTrace generate_synthetic_trace_detailed(const std::vector<SensorSpec>& layout,
                                                 const SyntheticTraceConfig& config);

Trace generate_synthetic_trace(const std::vector<SensorSpec>& layout,
                               const SyntheticTraceConfig& config);

/// Sensor layout + cost config: JSON file `{"sensors":[{name,features:[...],cost}]}`.
std::vector<SensorSpec> load_sensor_layout(const std::string& path);

}  // namespace ctxsense
