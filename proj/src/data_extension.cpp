#include "ctxsense/data_extension.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

#include "ctxsense/util.hpp"

namespace ctxsense {

namespace {

void check_config(const ExtensionConfig& c) {
    if (c.max_dist < 1) throw std::invalid_argument("extension: maxDist must be >= 1");
    if (c.k < 0) throw std::invalid_argument("extension: k must be >= 0");
}

}  // namespace

long eligible_record_count(const Trace& trace, const ExtensionConfig& config) {
    const long n = static_cast<long>(trace.records.size());
    return n > config.max_dist ? n - config.max_dist : 0;
}

std::vector<ExtendedRecord> extend(const Trace& trace, const ExtensionConfig& config) {
    check_config(config);
    const long eligible = eligible_record_count(trace, config);
    if (eligible <= 0)
        throw std::invalid_argument("extend: trace has " + std::to_string(trace.records.size()) +
                                    " records, needs more than maxDist=" +
                                    std::to_string(config.max_dist));

    const auto offsets = feature_offsets(trace.sensors);
    const std::size_t m = trace.sensors.size();
    const auto& records = trace.records;

    std::vector<ExtendedRecord> out;
    out.reserve(static_cast<std::size_t>(eligible * extension_block_size(config)));

    for (long idx = config.max_dist; idx < static_cast<long>(records.size()); ++idx) {
        // actual row, distances all zero
        out.push_back({records[idx].values, DistanceVector(m, 0), idx});

        // systematic rows: whole record taken dist intervals back
        for (int dist = 1; dist <= config.max_dist; ++dist)
            out.push_back({records[idx - dist].values, DistanceVector(m, dist), idx});

        // random rows: per-sensor independent distances
        const long actual_ordinal = idx - config.max_dist;
        for (int row = 0; row < config.k; ++row) {
            ExtendedRecord rec;
            rec.actual_index = idx;
            rec.distances.resize(m);
            rec.values.resize(records[idx].values.size());
            for (std::size_t s = 0; s < m; ++s) {
                std::mt19937_64 rng(stream_seed(config.seed, static_cast<std::uint64_t>(actual_ordinal),
                                                static_cast<std::uint64_t>(row),
                                                static_cast<std::uint64_t>(s)));
                std::uniform_int_distribution<int> dist_draw(1, config.max_dist);
                const int dist = dist_draw(rng);
                rec.distances[s] = dist;
                const auto& src = records[idx - dist].values;
                for (std::size_t f = offsets[s]; f < offsets[s + 1]; ++f)
                    rec.values[static_cast<Eigen::Index>(f)] = src[static_cast<Eigen::Index>(f)];
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

long actual_index_of(long extended_index, const ExtensionConfig& config) {
    check_config(config);
    if (extended_index < 0)
        throw std::out_of_range("actual_index_of: negative index");
    return extended_index / extension_block_size(config);
}

void write_extended_csv(const std::string& path, const std::vector<SensorSpec>& layout,
                        const std::vector<ExtendedRecord>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_extended_csv: cannot open '" + path + "'");
    for (const auto& s : layout)
        for (const auto& f : s.feature_names) out << s.name << "." << f << ",";
    for (const auto& s : layout) out << "dist." << s.name << ",";
    out << "actual_index\n";
    for (const auto& r : rows) {
        for (Eigen::Index i = 0; i < r.values.size(); ++i) out << format_double(r.values[i]) << ",";
        for (int d : r.distances) out << d << ",";
        out << r.actual_index << "\n";
    }
    if (!out) throw std::runtime_error("write_extended_csv: write to '" + path + "' failed");
}

std::vector<ExtendedRecord> read_extended_csv(const std::string& path,
                                              const std::vector<SensorSpec>& layout) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_extended_csv: cannot open '" + path + "'");
    const std::size_t d = total_feature_count(layout);
    const std::size_t m = layout.size();
    const std::size_t ncols = d + m + 1;

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_extended_csv: '" + path + "' is empty");

    std::vector<ExtendedRecord> rows;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != ncols)
            throw std::runtime_error("read_extended_csv: line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(ncols) + " columns, got " +
                                     std::to_string(cells.size()));
        ExtendedRecord rec;
        rec.values.resize(static_cast<Eigen::Index>(d));
        try {
            for (std::size_t i = 0; i < d; ++i)
                rec.values[static_cast<Eigen::Index>(i)] = parse_double(cells[i]);
            rec.distances.resize(m);
            for (std::size_t s = 0; s < m; ++s)
                rec.distances[s] = static_cast<int>(parse_long(cells[d + s]));
            rec.actual_index = parse_long(cells[d + m]);
        } catch (const std::exception& e) {
            throw std::runtime_error("read_extended_csv: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        rows.push_back(std::move(rec));
    }
    return rows;
}

}  // namespace ctxsense
