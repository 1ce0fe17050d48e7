#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "ctxsense/data_extension.hpp"
#include "ctxsense/trace_model.hpp"

using namespace ctxsense;

namespace {

Trace ramp_trace(long n_records) {
    // single 1-feature sensor with value v_t = t
    Trace trace;
    trace.sensors = {{"s", {"v"}, 1.0}};
    for (long t = 0; t < n_records; ++t) {
        Eigen::VectorXd v(1);
        v << static_cast<double>(t);
        trace.records.push_back({t, v});
    }
    return trace;
}

Trace random_trace(long n_records, std::uint64_t seed) {
    std::vector<SensorSpec> layout{{"a", {"x", "y"}, 3.0}, {"b", {"z"}, 1.0}, {"c", {"u", "v"}, 2.0}};
    SyntheticTraceConfig gen;
    gen.n_records = n_records;
    gen.n_regimes = 2;
    gen.switch_prob = 0.2;
    gen.noise_std = 1.0;
    gen.seed = seed;
    return generate_synthetic_trace(layout, gen);
}

}  // namespace

TEST_CASE("paper-scale extension emits 52 synthetic rows per actual record") {
    const auto trace = ramp_trace(100);
    ExtensionConfig config{32, 20, 1};
    const auto rows = extend(trace, config);

    const long eligible = 100 - 32;
    CHECK(extension_block_size(config) == 53);
    REQUIRE(static_cast<long>(rows.size()) == eligible * 53);

    // each block: one actual row then 52 synthetic
    for (long b = 0; b < eligible; ++b) {
        const auto& actual = rows[static_cast<std::size_t>(b * 53)];
        CHECK(actual.distances == DistanceVector{0});
        for (long i = 1; i < 53; ++i) {
            const auto& synth = rows[static_cast<std::size_t>(b * 53 + i)];
            CHECK(synth.distances[0] >= 1);
            CHECK(synth.distances[0] <= 32);
        }
    }
}

TEST_CASE("constant trace: synthetic rows equal the actual row") {
    Trace trace;
    trace.sensors = {{"s", {"v"}, 1.0}};
    for (long t = 0; t < 5; ++t) {
        Eigen::VectorXd v(1);
        v << 4.25;
        trace.records.push_back({t, v});
    }
    const auto rows = extend(trace, {1, 0, 0});
    REQUIRE(rows.size() == 4 * 2);
    for (std::size_t i = 0; i < rows.size(); i += 2) {
        CHECK(rows[i].values[0] == 4.25);
        CHECK(rows[i].distances == DistanceVector{0});
        CHECK(rows[i + 1].values[0] == 4.25);
        CHECK(rows[i + 1].distances == DistanceVector{1});
    }
}

TEST_CASE("systematic rows pull values from exactly dist intervals back") {
    const auto trace = ramp_trace(8);
    const auto rows = extend(trace, {2, 0, 0});
    // first eligible actual record is trace index 2; actual index 5 is block 3
    const auto block = 3 * extension_block_size({2, 0, 0});
    CHECK(rows[static_cast<std::size_t>(block)].values[0] == 5.0);
    CHECK(rows[static_cast<std::size_t>(block)].distances == DistanceVector{0});
    CHECK(rows[static_cast<std::size_t>(block) + 1].values[0] == 4.0);
    CHECK(rows[static_cast<std::size_t>(block) + 1].distances == DistanceVector{1});
    CHECK(rows[static_cast<std::size_t>(block) + 2].values[0] == 3.0);
    CHECK(rows[static_cast<std::size_t>(block) + 2].distances == DistanceVector{2});
}

TEST_CASE("actual_index_of block arithmetic") {
    const ExtensionConfig config{32, 20, 0};
    CHECK(actual_index_of(0, config) == 0);
    CHECK(actual_index_of(52, config) == 0);
    CHECK(actual_index_of(53, config) == 1);
    CHECK(actual_index_of(530, config) == 10);
    CHECK_THROWS_AS(actual_index_of(-1, config), std::out_of_range);
}

TEST_CASE("block-size law and value provenance on random traces") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const long n = 40 + static_cast<long>(rng() % 40);
        ExtensionConfig config;
        config.max_dist = 1 + static_cast<int>(rng() % 6);
        config.k = static_cast<int>(rng() % 5);
        config.seed = rng();
        const auto trace = random_trace(n, rng());
        const auto rows = extend(trace, config);

        const long eligible = n - config.max_dist;
        REQUIRE(static_cast<long>(rows.size()) == eligible * extension_block_size(config));

        const auto offsets = feature_offsets(trace.sensors);
        for (const auto& row : rows) {
            for (std::size_t s = 0; s < trace.sensors.size(); ++s) {
                const auto& source =
                    trace.records[static_cast<std::size_t>(row.actual_index - row.distances[s])];
                for (std::size_t f = offsets[s]; f < offsets[s + 1]; ++f)
                    CHECK(row.values[static_cast<Eigen::Index>(f)] ==
                          source.values[static_cast<Eigen::Index>(f)]);
            }
        }
    }
}

TEST_CASE("systematic rows enumerate every distance exactly once per block") {
    const auto trace = random_trace(30, 4);
    ExtensionConfig config{5, 3, 9};
    const auto rows = extend(trace, config);
    const long block = extension_block_size(config);
    for (long b = 0; b < eligible_record_count(trace, config); ++b) {
        std::vector<int> seen;
        for (int d = 1; d <= config.max_dist; ++d) {
            const auto& row = rows[static_cast<std::size_t>(b * block + d)];
            for (std::size_t s = 0; s < trace.sensors.size(); ++s)
                CHECK(row.distances[s] == d);
            seen.push_back(row.distances[0]);
        }
        CHECK(seen == std::vector<int>{1, 2, 3, 4, 5});
    }
}

TEST_CASE("extension is deterministic under its seed") {
    const auto trace = random_trace(50, 123);
    ExtensionConfig config{4, 6, 42};
    const auto a = extend(trace, config);
    const auto b = extend(trace, config);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].values == b[i].values);
        CHECK(a[i].distances == b[i].distances);
    }
}

TEST_CASE("random-row distances are uniform (chi-square sanity)") {
    // one actual record, k = 10000 random rows, per-sensor draws
    const int max_dist = 32;
    const auto trace = ramp_trace(max_dist + 1);
    ExtensionConfig config{max_dist, 10000, 555};
    const auto rows = extend(trace, config);
    REQUIRE(static_cast<long>(rows.size()) == extension_block_size(config));

    std::vector<long> counts(static_cast<std::size_t>(max_dist), 0);
    for (std::size_t i = static_cast<std::size_t>(1 + max_dist); i < rows.size(); ++i)
        ++counts[static_cast<std::size_t>(rows[i].distances[0] - 1)];

    const double expected = 10000.0 / max_dist;
    double chi2 = 0;
    for (long c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // df = 31; far above the 99.9% critical value would flag a broken generator
    CHECK(chi2 < 70.0);
}

TEST_CASE("trace shorter than maxDist is rejected") {
    const auto trace = ramp_trace(3);
    CHECK_THROWS_AS(extend(trace, {3, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(extend(trace, {10, 0, 0}), std::invalid_argument);
}

TEST_CASE("extended CSV round-trip") {
    const auto trace = random_trace(25, 8);
    ExtensionConfig config{3, 2, 17};
    const auto rows = extend(trace, config);

    const auto path = (std::filesystem::temp_directory_path() / "ctx_extended.csv").string();
    write_extended_csv(path, trace.sensors, rows);
    const auto reloaded = read_extended_csv(path, trace.sensors);
    REQUIRE(reloaded.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(reloaded[i].values == rows[i].values);
        CHECK(reloaded[i].distances == rows[i].distances);
        CHECK(reloaded[i].actual_index == rows[i].actual_index);
    }
    std::remove(path.c_str());
}
