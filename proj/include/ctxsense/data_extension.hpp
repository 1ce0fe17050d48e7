#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxsense/trace_model.hpp"

namespace ctxsense {

/// Intervals elapsed since each sensor's value was actually sensed.
/// 0 means "fresh"; entries never exceed the extension maxDist.
using DistanceVector = std::vector<int>;

/// One row of the extended dataset: a value vector whose sensor blocks are
/// stale by the per-sensor distances, plus the trace index of the actual
/// record the row derives from.
struct ExtendedRecord {
    Eigen::VectorXd values;
    DistanceVector distances;
    long actual_index = 0;  // index into trace.records
};

struct ExtensionConfig {
    int max_dist = 1;   // >= 1
    int k = 0;          // random rows per actual record
    std::uint64_t seed = 0;
};

inline long extension_block_size(const ExtensionConfig& c) { return 1 + c.max_dist + c.k; }

/// Manufacture the extended dataset: for every actual record with a full
/// history window (index >= maxDist) emit the actual row (all distances 0),
/// one systematic row per distance in [1, maxDist] with every sensor taken
/// from that many intervals earlier, and k random rows where each sensor
/// independently draws its distance from Uniform{1..maxDist}. Deterministic
/// under the config seed.
std::vector<ExtendedRecord> extend(const Trace& trace, const ExtensionConfig& config);

/// Number of actual records eligible for extension (those with full history).
long eligible_record_count(const Trace& trace, const ExtensionConfig& config);

/// Maps an index into the extension output back to the eligible-record
/// ordinal it belongs to (block arithmetic; block size = 1 + maxDist + k).
/// The trace index of that record is ordinal + maxDist.
long actual_index_of(long extended_index, const ExtensionConfig& config);

/// Dump/reload format: value columns, then `dist.<sensor>` columns, then `actual_index`.
void write_extended_csv(const std::string& path, const std::vector<SensorSpec>& layout,
                        const std::vector<ExtendedRecord>& rows);
std::vector<ExtendedRecord> read_extended_csv(const std::string& path,
                                              const std::vector<SensorSpec>& layout);

}  // namespace ctxsense
