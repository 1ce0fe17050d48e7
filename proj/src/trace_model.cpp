#include "ctxsense/trace_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ctxsense/util.hpp"

namespace ctxsense {

std::size_t total_feature_count(const std::vector<SensorSpec>& sensors) {
    std::size_t n = 0;
    for (const auto& s : sensors) n += s.feature_names.size();
    return n;
}

std::vector<std::size_t> feature_offsets(const std::vector<SensorSpec>& sensors) {
    std::vector<std::size_t> offsets;
    offsets.reserve(sensors.size() + 1);
    std::size_t off = 0;
    for (const auto& s : sensors) {
        offsets.push_back(off);
        off += s.feature_names.size();
    }
    offsets.push_back(off);
    return offsets;
}

Eigen::VectorXd sensor_costs(const std::vector<SensorSpec>& sensors) {
    Eigen::VectorXd c(static_cast<Eigen::Index>(sensors.size()));
    for (std::size_t i = 0; i < sensors.size(); ++i) c[static_cast<Eigen::Index>(i)] = sensors[i].cost;
    return c;
}

void validate_layout(const std::vector<SensorSpec>& sensors) {
    if (sensors.empty()) throw std::invalid_argument("layout: no sensors");
    for (const auto& s : sensors) {
        if (s.name.empty()) throw std::invalid_argument("layout: sensor with empty name");
        if (s.feature_names.empty())
            throw std::invalid_argument("layout: sensor '" + s.name + "' has no features");
        if (s.cost < 0)
            throw std::invalid_argument("layout: sensor '" + s.name + "' has negative cost");
        for (std::size_t i = 0; i < s.feature_names.size(); ++i)
            for (std::size_t j = i + 1; j < s.feature_names.size(); ++j)
                if (s.feature_names[i] == s.feature_names[j])
                    throw std::invalid_argument("layout: sensor '" + s.name +
                                                "' has duplicate feature '" + s.feature_names[i] + "'");
    }
}

StandardizationStats fit_standardization(const Trace& trace) {
    if (trace.records.empty()) throw std::invalid_argument("fit_standardization: empty trace");
    const auto d = static_cast<Eigen::Index>(total_feature_count(trace.sensors));
    const auto n = static_cast<double>(trace.records.size());

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& r : trace.records) mean += r.values;
    mean /= n;

    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& r : trace.records) var += (r.values - mean).cwiseAbs2();
    var /= n;  // population variance

    StandardizationStats stats;
    stats.mean = std::move(mean);
    stats.std = var.cwiseSqrt().cwiseMax(kStdFloor);
    return stats;
}

Eigen::VectorXd standardize_values(const Eigen::VectorXd& values, const StandardizationStats& stats) {
    if (values.size() != stats.mean.size())
        throw std::invalid_argument("standardize_values: dimension mismatch");
    return (values - stats.mean).cwiseQuotient(stats.std);
}

Eigen::VectorXd unstandardize_values(const Eigen::VectorXd& values, const StandardizationStats& stats) {
    if (values.size() != stats.mean.size())
        throw std::invalid_argument("unstandardize_values: dimension mismatch");
    return values.cwiseProduct(stats.std) + stats.mean;
}

Trace apply_standardization(const Trace& trace, const StandardizationStats& stats) {
    Trace out;
    out.sensors = trace.sensors;
    out.records.reserve(trace.records.size());
    for (const auto& r : trace.records)
        out.records.push_back({r.timestamp, standardize_values(r.values, stats)});
    return out;
}

StandardizationStats identity_stats(std::size_t dim) {
    StandardizationStats s;
    s.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    s.std = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim));
    return s;
}

namespace {

std::vector<std::string> expected_header(const std::vector<SensorSpec>& layout) {
    std::vector<std::string> cols;
    cols.emplace_back("timestamp");
    for (const auto& s : layout)
        for (const auto& f : s.feature_names) cols.push_back(s.name + "." + f);
    return cols;
}

}  // namespace

Trace load_trace(const std::string& path, const std::vector<SensorSpec>& layout) {
    validate_layout(layout);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_trace: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_trace: '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto expected = expected_header(layout);
    const auto header = split_csv_line(line);
    if (header != expected) {
        std::string want;
        for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
        throw std::runtime_error("load_trace: header mismatch in '" + path + "': got '" + line +
                                 "', expected '" + want + "'");
    }

    Trace trace;
    trace.sensors = layout;
    const std::size_t d = total_feature_count(layout);
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != d + 1)
            throw std::runtime_error("load_trace: line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(d + 1) + " columns, got " +
                                     std::to_string(cells.size()));
        TraceRecord rec;
        try {
            rec.timestamp = parse_long(cells[0]);
            rec.values.resize(static_cast<Eigen::Index>(d));
            for (std::size_t i = 0; i < d; ++i)
                rec.values[static_cast<Eigen::Index>(i)] = parse_double(cells[i + 1]);
        } catch (const std::exception& e) {
            throw std::runtime_error("load_trace: line " + std::to_string(line_no) + ": " + e.what());
        }
        trace.records.push_back(std::move(rec));
    }
    if (trace.records.empty()) throw std::runtime_error("load_trace: '" + path + "' has no records");

    std::stable_sort(trace.records.begin(), trace.records.end(),
                     [](const TraceRecord& a, const TraceRecord& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < trace.records.size(); ++i) {
        const long prev = trace.records[i - 1].timestamp;
        const long cur = trace.records[i].timestamp;
        if (cur == prev)
            throw std::runtime_error("load_trace: duplicate timestamp " + std::to_string(cur) +
                                     " (record " + std::to_string(i + 1) + " after sorting)");
        if (cur != prev + 1)
            throw std::runtime_error("load_trace: gap before timestamp " + std::to_string(cur) +
                                     " (record " + std::to_string(i + 1) +
                                     " after sorting; expected " + std::to_string(prev + 1) + ")");
    }
    return trace;
}

void write_trace(const std::string& path, const Trace& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trace: cannot open '" + path + "' for writing");
    const auto cols = expected_header(trace.sensors);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    for (const auto& r : trace.records) {
        out << r.timestamp;
        for (Eigen::Index i = 0; i < r.values.size(); ++i) out << "," << format_double(r.values[i]);
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_trace: write to '" + path + "' failed");
}

SyntheticTrace generate_synthetic_trace_detailed(const std::vector<SensorSpec>& layout,
                                                 const SyntheticTraceConfig& config) {
    validate_layout(layout);
    if (config.n_records < 1) throw std::invalid_argument("generate_synthetic_trace: n_records < 1");
    if (config.n_regimes < 1) throw std::invalid_argument("generate_synthetic_trace: n_regimes < 1");
    if (config.switch_prob < 0.0 || config.switch_prob > 1.0)
        throw std::invalid_argument("generate_synthetic_trace: switch_prob outside [0,1]");
    if (config.noise_std < 0.0) throw std::invalid_argument("generate_synthetic_trace: noise_std < 0");

    const auto d = static_cast<Eigen::Index>(total_feature_count(layout));

    std::mt19937_64 mean_rng(stream_seed(config.seed, 0x6d65616e));   // regime means
    std::mt19937_64 chain_rng(stream_seed(config.seed, 0x636861696e)); // markov chain
    std::mt19937_64 noise_rng(stream_seed(config.seed, 0x6e6f697365)); // per-record noise

    constexpr double kRegimeSpread = 2.0;
    std::normal_distribution<double> mean_dist(0.0, kRegimeSpread);
    Eigen::MatrixXd means(config.n_regimes, d);
    for (int r = 0; r < config.n_regimes; ++r)
        for (Eigen::Index f = 0; f < d; ++f) means(r, f) = mean_dist(mean_rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> regime_pick(0, config.n_regimes - 1);
    std::normal_distribution<double> noise(0.0, 1.0);

    SyntheticTrace out;
    out.trace.sensors = layout;
    out.trace.records.reserve(static_cast<std::size_t>(config.n_records));
    out.regimes.reserve(static_cast<std::size_t>(config.n_records));
    out.regime_means = means;

    int regime = 0;
    for (long t = 0; t < config.n_records; ++t) {
        if (t > 0 && unit(chain_rng) < config.switch_prob) regime = regime_pick(chain_rng);
        TraceRecord rec;
        rec.timestamp = t;
        rec.values.resize(d);
        for (Eigen::Index f = 0; f < d; ++f)
            rec.values[f] = means(regime, f) + config.noise_std * noise(noise_rng);
        out.trace.records.push_back(std::move(rec));
        out.regimes.push_back(regime);
    }
    return out;
}

Trace generate_synthetic_trace(const std::vector<SensorSpec>& layout,
                               const SyntheticTraceConfig& config) {
    return generate_synthetic_trace_detailed(layout, config).trace;
}

std::vector<SensorSpec> load_sensor_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_sensor_layout: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    if (!j.contains("sensors") || !j["sensors"].is_array())
        throw std::runtime_error("load_sensor_layout: '" + path + "' has no 'sensors' array");
    std::vector<SensorSpec> layout;
    for (const auto& js : j["sensors"]) {
        SensorSpec s;
        s.name = js.at("name").get<std::string>();
        for (const auto& f : js.at("features")) s.feature_names.push_back(f.get<std::string>());
        s.cost = js.at("cost").get<double>();
        layout.push_back(std::move(s));
    }
    validate_layout(layout);
    return layout;
}

}  // namespace ctxsense
