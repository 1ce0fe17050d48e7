#include "ctxsense/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ctxsense/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ctxsense {

namespace {

SensorSpec sensor_from_json(const json& js) {
    SensorSpec s;
    s.name = js.at("name").get<std::string>();
    for (const auto& f : js.at("features")) s.feature_names.push_back(f.get<std::string>());
    s.cost = js.at("cost").get<double>();
    return s;
}

json sensor_to_json(const SensorSpec& s) {
    return {{"name", s.name}, {"features", s.feature_names}, {"cost", s.cost}};
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
    }

    ExperimentConfig c;
    read_key(j, "output_dir", c.output_dir);
    read_key(j, "seed", c.seed);
    read_key(j, "parallelism", c.parallelism);

    if (j.contains("trace")) {
        const auto& jt = j.at("trace");
        std::string source = "synthetic";
        read_key(jt, "source", source);
        if (source == "synthetic") {
            c.synthetic = true;
            read_key(jt, "users", c.users);
            read_key(jt, "n_records", c.n_records);
            read_key(jt, "n_regimes", c.n_regimes);
            read_key(jt, "switch_prob", c.switch_prob);
            read_key(jt, "noise_std", c.noise_std);
        } else if (source == "csv") {
            c.synthetic = false;
            c.csv_paths = jt.at("csv_paths").get<std::vector<std::string>>();
            c.users = static_cast<int>(c.csv_paths.size());
        } else {
            throw std::runtime_error("config: trace.source must be 'synthetic' or 'csv'");
        }
    }

    if (!j.contains("sensors")) throw std::runtime_error("config: missing 'sensors'");
    for (const auto& js : j.at("sensors")) c.sensors.push_back(sensor_from_json(js));
    validate_layout(c.sensors);

    if (j.contains("extension")) {
        const auto& je = j.at("extension");
        read_key(je, "max_dist", c.extension.max_dist);
        read_key(je, "k", c.extension.k);
    }
    if (j.contains("autoencoder")) {
        const auto& ja = j.at("autoencoder");
        read_key(ja, "bottleneck_dim", c.autoencoder.bottleneck_dim);
        read_key(ja, "hidden_dim", c.autoencoder.hidden_dim);
        read_key(ja, "epochs", c.autoencoder.epochs);
        read_key(ja, "batch_size", c.autoencoder.batch_size);
        read_key(ja, "learning_rate", c.autoencoder.learning_rate);
        if (ja.contains("activation")) {
            const auto a = ja.at("activation").get<std::string>();
            if (a == "tanh") c.autoencoder.hidden_activation = Activation::Tanh;
            else if (a == "linear") c.autoencoder.hidden_activation = Activation::Linear;
            else throw std::runtime_error("config: autoencoder.activation must be tanh or linear");
        }
    }
    if (j.contains("lasso")) {
        const auto& jl = j.at("lasso");
        read_key(jl, "lambda", c.lasso.lambda);
        read_key(jl, "tolerance", c.lasso.tolerance);
        read_key(jl, "max_sweeps", c.lasso.max_sweeps);
    }

    if (!j.contains("alphas")) throw std::runtime_error("config: missing 'alphas'");
    c.alphas = j.at("alphas").get<std::vector<double>>();
    if (c.alphas.empty()) throw std::runtime_error("config: 'alphas' must be non-empty");
    for (double a : c.alphas)
        if (a < 0) throw std::runtime_error("config: alphas must be >= 0");

    std::vector<std::string> mode_names{"MIN", "AVG", "MAX", "NEVER"};
    read_key(j, "modes", mode_names);
    for (const auto& name : mode_names) c.modes.push_back(timing_mode_from_string(name));
    if (c.modes.empty()) throw std::runtime_error("config: 'modes' must be non-empty");

    read_key(j, "train_fraction", c.train_fraction);
    if (c.train_fraction <= 0.0 || c.train_fraction >= 1.0)
        throw std::runtime_error("config: train_fraction must be inside (0,1)");
    if (j.contains("baseline")) {
        const auto& jb = j.at("baseline");
        read_key(jb, "alpha_param", c.baseline_alpha_param);
        read_key(jb, "quantile", c.baseline_quantile);
    }
    read_key(j, "nemenyi_q_alpha", c.nemenyi_q_alpha);

    if (c.users < 1) throw std::runtime_error("config: need at least 1 user");
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& c) {
    json j;
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["trace"] = c.synthetic
                     ? json{{"source", "synthetic"}, {"users", c.users}, {"n_records", c.n_records},
                            {"n_regimes", c.n_regimes}, {"switch_prob", c.switch_prob},
                            {"noise_std", c.noise_std}}
                     : json{{"source", "csv"}, {"csv_paths", c.csv_paths}};
    j["sensors"] = json::array();
    for (const auto& s : c.sensors) j["sensors"].push_back(sensor_to_json(s));
    j["extension"] = {{"max_dist", c.extension.max_dist}, {"k", c.extension.k}};
    j["autoencoder"] = {
        {"bottleneck_dim", c.autoencoder.bottleneck_dim},
        {"hidden_dim", c.autoencoder.hidden_dim},
        {"epochs", c.autoencoder.epochs},
        {"batch_size", c.autoencoder.batch_size},
        {"learning_rate", c.autoencoder.learning_rate},
        {"activation", c.autoencoder.hidden_activation == Activation::Tanh ? "tanh" : "linear"},
    };
    j["lasso"] = {{"lambda", c.lasso.lambda},
                  {"tolerance", c.lasso.tolerance},
                  {"max_sweeps", c.lasso.max_sweeps}};
    j["alphas"] = c.alphas;
    json modes = json::array();
    for (auto m : c.modes) modes.push_back(to_string(m));
    j["modes"] = modes;
    j["train_fraction"] = c.train_fraction;
    j["baseline"] = {{"alpha_param", c.baseline_alpha_param}, {"quantile", c.baseline_quantile}};
    j["nemenyi_q_alpha"] = c.nemenyi_q_alpha;
    return j.dump();
}

int user_count(const ExperimentConfig& config) { return config.users; }

Trace user_trace(const ExperimentConfig& config, int user_index) {
    if (user_index < 0 || user_index >= config.users)
        throw std::out_of_range("user_trace: user index out of range");
    if (config.synthetic) {
        SyntheticTraceConfig gen;
        gen.n_records = config.n_records;
        gen.n_regimes = config.n_regimes;
        gen.switch_prob = config.switch_prob;
        gen.noise_std = config.noise_std;
        gen.seed = stream_seed(config.seed, 0x75736572, static_cast<std::uint64_t>(user_index));
        return generate_synthetic_trace(config.sensors, gen);
    }
    return load_trace(config.csv_paths[static_cast<std::size_t>(user_index)], config.sensors);
}

std::pair<Trace, Trace> split_trace(const Trace& trace, double train_fraction) {
    const auto n = static_cast<long>(trace.records.size());
    const long split = std::max<long>(1, static_cast<long>(train_fraction * static_cast<double>(n)));
    if (split >= n)
        throw std::invalid_argument("split_trace: no test records left after the training prefix");
    Trace train{trace.sensors, {trace.records.begin(), trace.records.begin() + split}};
    Trace test{trace.sensors, {trace.records.begin() + split, trace.records.end()}};
    return {std::move(train), std::move(test)};
}

UserModels train_user_models(const Trace& full_trace, const ExperimentConfig& config) {
    UserModels um;
    std::tie(um.train, um.test) = split_trace(full_trace, config.train_fraction);

    const auto stats = fit_standardization(um.train);
    const auto d = static_cast<Eigen::Index>(total_feature_count(config.sensors));
    Eigen::MatrixXd standardized(static_cast<Eigen::Index>(um.train.records.size()), d);
    for (std::size_t i = 0; i < um.train.records.size(); ++i)
        standardized.row(static_cast<Eigen::Index>(i)) =
            standardize_values(um.train.records[i].values, stats);

    AutoencoderConfig ae = config.autoencoder;
    ae.seed = stream_seed(config.seed, 0xae00);
    um.context_model = train_autoencoder(standardized, stats, ae);

    ExtensionConfig ext = config.extension;
    ext.seed = stream_seed(config.seed, 0xe87e);
    const auto extended = extend(um.train, ext);
    const auto pairs = detect_contexts(um.context_model, extended);
    const auto rows = build_training_set(pairs, ext);
    um.loss_model = train_info_loss(rows, config.lasso);

    um.event_threshold = compute_event_threshold(um.train, um.context_model, config.baseline_quantile);
    return um;
}

namespace {

std::string step_log_path(const ExperimentConfig& config, int user, const SimulationResult& r) {
    const std::string tag =
        r.method == "baseline" ? "baseline" : r.mode + "_a" + format_double(r.alpha);
    return config.output_dir + "/steps_user" + std::to_string(user) + "_" + tag + ".csv";
}

}  // namespace

std::vector<SimulationResult> simulate_user_grid(const UserModels& models,
                                                 const ExperimentConfig& config, int user) {
    std::vector<SimulationResult> results;
    results.reserve(config.alphas.size() * config.modes.size() + 1);
    const Eigen::VectorXd costs = sensor_costs(config.sensors);
    StepLog log;
    StepLog* log_ptr = config.verbose ? &log : nullptr;
    for (double alpha : config.alphas) {
        for (TimingMode mode : config.modes) {
            ObjectiveConfig oc{alpha, config.extension.max_dist, costs};
            log.clear();
            results.push_back(run_simulation(models.test, models.context_model, models.loss_model,
                                             oc, mode, log_ptr));
            if (config.verbose)
                write_step_log_csv(step_log_path(config, user, results.back()), config.sensors, log);
        }
    }
    BaselineConfig bc;
    bc.alpha_param = config.baseline_alpha_param;
    bc.max_dist = config.extension.max_dist;
    bc.costs = costs;
    bc.threshold = models.event_threshold;
    log.clear();
    results.push_back(run_baseline(models.test, models.context_model, bc, log_ptr));
    if (config.verbose)
        write_step_log_csv(step_log_path(config, user, results.back()), config.sensors, log);
    return results;
}

void write_results_csv(const std::string& path, const std::vector<UserResult>& results,
                       const std::vector<SensorSpec>& sensors) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_results_csv: cannot open '" + path + "'");
    out << "user,method,alpha,mode,total_cost,total_info_loss,policy_changes";
    for (const auto& s : sensors) out << ",mean_dist." << s.name;
    out << "\n";
    for (const auto& [user, r] : results) {
        out << user << "," << r.method << "," << format_double(r.alpha) << "," << r.mode << ","
            << format_double(r.total_cost) << "," << format_double(r.total_info_loss) << ","
            << r.policy_change_count;
        for (Eigen::Index s = 0; s < r.mean_distance.size(); ++s)
            out << "," << format_double(r.mean_distance[s]);
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_results_csv: write to '" + path + "' failed");
}

std::vector<UserResult> read_results_csv(const std::string& path,
                                         const std::vector<SensorSpec>& sensors) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_results_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_results_csv: '" + path + "' is empty");

    const std::size_t ncols = 7 + sensors.size();
    std::vector<UserResult> out;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != ncols)
            throw std::runtime_error("read_results_csv: line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(ncols) + " columns");
        UserResult ur;
        ur.user = static_cast<int>(parse_long(cells[0]));
        ur.result.method = cells[1];
        ur.result.alpha = parse_double(cells[2]);
        ur.result.mode = cells[3];
        ur.result.total_cost = parse_double(cells[4]);
        ur.result.total_info_loss = parse_double(cells[5]);
        ur.result.policy_change_count = parse_long(cells[6]);
        ur.result.mean_distance.resize(static_cast<Eigen::Index>(sensors.size()));
        for (std::size_t s = 0; s < sensors.size(); ++s)
            ur.result.mean_distance[static_cast<Eigen::Index>(s)] = parse_double(cells[7 + s]);
        out.push_back(std::move(ur));
    }
    return out;
}

namespace {

std::string trace_path(const std::string& dir, int user) {
    return dir + "/trace_user" + std::to_string(user) + ".csv";
}
std::string extended_path(const std::string& dir, int user) {
    return dir + "/extended_user" + std::to_string(user) + ".csv";
}
std::string context_model_path(const std::string& dir, int user) {
    return dir + "/context_model_user" + std::to_string(user) + ".json";
}
std::string loss_model_path(const std::string& dir, int user) {
    return dir + "/loss_model_user" + std::to_string(user) + ".json";
}

void require_artifact(const std::string& path, const char* producing_stage) {
    if (!fs::exists(path))
        throw std::runtime_error("missing upstream artifact '" + path + "' (run the " +
                                 producing_stage + " stage first)");
}

void ensure_output_dir(const ExperimentConfig& config) {
    if (config.output_dir.empty())
        throw std::runtime_error("no output directory (set output_dir, --out, or CTXSENSE_OUT)");
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory '" + config.output_dir +
                                 "': " + ec.message());
}

ExtensionConfig resolved_extension(const ExperimentConfig& config) {
    ExtensionConfig ext = config.extension;
    ext.seed = stream_seed(config.seed, 0xe87e);
    return ext;
}

double mean_of(const std::vector<double>& v) {
    double sum = 0;
    for (double x : v) sum += x;
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

}  // namespace

void evaluate_results(const std::vector<UserResult>& results, const ExperimentConfig& config,
                      const std::string& out_dir) {
    if (results.empty()) throw std::invalid_argument("evaluate_results: no results");
    const auto k = config.modes.size();

    // per-(user, alpha) blocks rank the timing modes by Pareto peeling
    std::vector<std::vector<double>> rank_rows;
    for (int user = 0; user < config.users; ++user) {
        for (double alpha : config.alphas) {
            std::vector<RunPoint> points;
            for (TimingMode mode : config.modes) {
                const std::string mode_name = to_string(mode);
                for (const auto& [u, r] : results) {
                    if (u == user && r.method == "dynamic" && r.mode == mode_name &&
                        r.alpha == alpha) {
                        points.push_back({mode_name, r.total_info_loss, r.total_cost});
                        break;
                    }
                }
            }
            if (points.size() != k)
                throw std::runtime_error("evaluate_results: incomplete grid for user " +
                                         std::to_string(user) + ", alpha " + format_double(alpha));
            const auto peeled = pareto_rank(points);
            std::vector<double> scores(peeled.begin(), peeled.end());
            rank_rows.push_back(average_ranks(scores));
        }
    }

    const auto n_blocks = static_cast<int>(rank_rows.size());
    std::vector<double> mean_ranks(k, 0.0);
    for (const auto& row : rank_rows)
        for (std::size_t j = 0; j < k; ++j) mean_ranks[j] += row[j];
    for (auto& r : mean_ranks) r /= n_blocks;

    {
        std::ofstream out(out_dir + "/ranks.csv");
        if (!out) throw std::runtime_error("evaluate_results: cannot write ranks.csv");
        out << "method,mean_rank\n";
        for (std::size_t j = 0; j < k; ++j)
            out << to_string(config.modes[j]) << "," << format_double(mean_ranks[j]) << "\n";
    }

    std::string chi2_text = "degenerate";
    std::string ff_text = "degenerate";
    if (n_blocks >= 2 && k >= 2) {
        try {
            const auto fr = friedman_from_mean_ranks(mean_ranks, n_blocks);
            chi2_text = format_double(fr.chi2);
            ff_text = format_double(fr.ff);
        } catch (const std::domain_error&) {
            // perfect agreement across blocks; leave the markers in place
        }
    }
    const double cd = k >= 2 ? nemenyi_critical_difference(static_cast<int>(k), n_blocks,
                                                           config.nemenyi_q_alpha)
                             : 0.0;

    {
        std::ofstream out(out_dir + "/stats.csv");
        if (!out) throw std::runtime_error("evaluate_results: cannot write stats.csv");
        out << "statistic,value\n";
        out << "blocks," << n_blocks << "\n";
        out << "methods," << k << "\n";
        out << "chi2_F," << chi2_text << "\n";
        out << "F_F," << ff_text << "\n";
        out << "nemenyi_q_alpha," << format_double(config.nemenyi_q_alpha) << "\n";
        out << "critical_difference," << format_double(cd) << "\n";

        // baseline vs MIN, paired over users per alpha; the significance
        // decision is the caller's, with their own critical value
        const bool has_min = std::find(config.modes.begin(), config.modes.end(),
                                       TimingMode::Min) != config.modes.end();
        if (config.users >= 2 && has_min) {
            for (double alpha : config.alphas) {
                std::vector<double> min_cost, min_loss, base_cost, base_loss;
                for (int user = 0; user < config.users; ++user) {
                    for (const auto& [u, r] : results) {
                        if (u != user) continue;
                        if (r.method == "dynamic" && r.mode == "MIN" && r.alpha == alpha) {
                            min_cost.push_back(r.total_cost);
                            min_loss.push_back(r.total_info_loss);
                        } else if (r.method == "baseline") {
                            base_cost.push_back(r.total_cost);
                            base_loss.push_back(r.total_info_loss);
                        }
                    }
                }
                if (min_cost.size() != base_cost.size() || min_cost.size() < 2) continue;
                const auto write_t = [&](const char* label, const std::vector<double>& a,
                                         const std::vector<double>& b) {
                    out << label << "_alpha" << format_double(alpha) << ",";
                    try {
                        const auto t = paired_t_test(a, b);
                        out << format_double(t.t) << "\n";
                    } catch (const std::domain_error&) {
                        out << "degenerate\n";
                    }
                };
                write_t("t_cost_min_vs_baseline", min_cost, base_cost);
                write_t("t_loss_min_vs_baseline", min_loss, base_loss);
            }
        }
    }

    {
        std::ofstream out(out_dir + "/pairwise.csv");
        if (!out) throw std::runtime_error("evaluate_results: cannot write pairwise.csv");
        out << "method_a,method_b,mean_rank_a,mean_rank_b,abs_diff,critical_difference,significant\n";
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = a + 1; b < k; ++b) {
                const double diff = std::abs(mean_ranks[a] - mean_ranks[b]);
                out << to_string(config.modes[a]) << "," << to_string(config.modes[b]) << ","
                    << format_double(mean_ranks[a]) << "," << format_double(mean_ranks[b]) << ","
                    << format_double(diff) << "," << format_double(cd) << ","
                    << (diff > cd ? 1 : 0) << "\n";
            }
        }
    }

    {
        std::ofstream out(out_dir + "/tradeoff.csv");
        if (!out) throw std::runtime_error("evaluate_results: cannot write tradeoff.csv");
        out << "alpha,mean_cost,mean_info_loss,method\n";
        for (double alpha : config.alphas) {
            for (TimingMode mode : config.modes) {
                const std::string mode_name = to_string(mode);
                std::vector<double> costs, losses;
                for (const auto& [u, r] : results) {
                    if (r.method == "dynamic" && r.mode == mode_name && r.alpha == alpha) {
                        costs.push_back(r.total_cost);
                        losses.push_back(r.total_info_loss);
                    }
                }
                out << format_double(alpha) << "," << format_double(mean_of(costs)) << ","
                    << format_double(mean_of(losses)) << "," << mode_name << "\n";
            }
        }
        std::vector<double> base_costs, base_losses;
        for (const auto& [u, r] : results) {
            if (r.method == "baseline") {
                base_costs.push_back(r.total_cost);
                base_losses.push_back(r.total_info_loss);
            }
        }
        if (!base_costs.empty()) {
            for (double alpha : config.alphas)
                out << format_double(alpha) << "," << format_double(mean_of(base_costs)) << ","
                    << format_double(mean_of(base_losses)) << ",baseline\n";
        }
    }
}

Stage stage_from_string(const std::string& s) {
    if (s == "generate") return Stage::Generate;
    if (s == "extend") return Stage::Extend;
    if (s == "train-context") return Stage::TrainContext;
    if (s == "train-loss") return Stage::TrainLoss;
    if (s == "simulate") return Stage::Simulate;
    if (s == "evaluate") return Stage::Evaluate;
    throw std::invalid_argument("unknown stage '" + s + "'");
}

void cmd_stage(Stage stage, const ExperimentConfig& config) {
    ensure_output_dir(config);
    const std::string& dir = config.output_dir;

    switch (stage) {
        case Stage::Generate: {
            for (int u = 0; u < config.users; ++u)
                write_trace(trace_path(dir, u), user_trace(config, u));
            return;
        }
        case Stage::Extend: {
            const auto ext = resolved_extension(config);
            for (int u = 0; u < config.users; ++u) {
                require_artifact(trace_path(dir, u), "generate");
                const auto trace = load_trace(trace_path(dir, u), config.sensors);
                const auto [train, test] = split_trace(trace, config.train_fraction);
                write_extended_csv(extended_path(dir, u), config.sensors, extend(train, ext));
            }
            return;
        }
        case Stage::TrainContext: {
            for (int u = 0; u < config.users; ++u) {
                require_artifact(trace_path(dir, u), "generate");
                const auto trace = load_trace(trace_path(dir, u), config.sensors);
                const auto [train, test] = split_trace(trace, config.train_fraction);
                const auto stats = fit_standardization(train);
                const auto d = static_cast<Eigen::Index>(total_feature_count(config.sensors));
                Eigen::MatrixXd standardized(static_cast<Eigen::Index>(train.records.size()), d);
                for (std::size_t i = 0; i < train.records.size(); ++i)
                    standardized.row(static_cast<Eigen::Index>(i)) =
                        standardize_values(train.records[i].values, stats);
                AutoencoderConfig ae = config.autoencoder;
                ae.seed = stream_seed(config.seed, 0xae00);
                save_autoencoder(context_model_path(dir, u),
                                 train_autoencoder(standardized, stats, ae));
            }
            return;
        }
        case Stage::TrainLoss: {
            const auto ext = resolved_extension(config);
            for (int u = 0; u < config.users; ++u) {
                require_artifact(extended_path(dir, u), "extend");
                require_artifact(context_model_path(dir, u), "train-context");
                const auto model = load_autoencoder(context_model_path(dir, u));
                const auto extended = read_extended_csv(extended_path(dir, u), config.sensors);
                const auto pairs = detect_contexts(model, extended);
                const auto rows = build_training_set(pairs, ext);
                save_info_loss_model(loss_model_path(dir, u), train_info_loss(rows, config.lasso));
            }
            return;
        }
        case Stage::Simulate: {
            std::vector<UserResult> results;
            for (int u = 0; u < config.users; ++u) {
                require_artifact(trace_path(dir, u), "generate");
                require_artifact(context_model_path(dir, u), "train-context");
                require_artifact(loss_model_path(dir, u), "train-loss");
                UserModels models;
                const auto trace = load_trace(trace_path(dir, u), config.sensors);
                std::tie(models.train, models.test) = split_trace(trace, config.train_fraction);
                models.context_model = load_autoencoder(context_model_path(dir, u));
                models.loss_model = load_info_loss_model(loss_model_path(dir, u));
                models.event_threshold =
                    compute_event_threshold(models.train, models.context_model,
                                            config.baseline_quantile);
                for (auto& r : simulate_user_grid(models, config, u))
                    results.push_back({u, std::move(r)});
            }
            write_results_csv(dir + "/results.csv", results, config.sensors);
            return;
        }
        case Stage::Evaluate: {
            require_artifact(dir + "/results.csv", "simulate");
            const auto results = read_results_csv(dir + "/results.csv", config.sensors);
            evaluate_results(results, config, dir);
            return;
        }
    }
    throw std::logic_error("unknown stage");
}

namespace {

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("manifest: cannot hash missing file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void cmd_run(const ExperimentConfig& config) {
    ensure_output_dir(config);
    const std::string& dir = config.output_dir;

    // flags partially written output; removed only after a complete run
    const std::string marker = dir + "/RUN_IN_PROGRESS";
    {
        std::ofstream out(marker);
        if (!out) throw std::runtime_error("cannot write to output directory '" + dir + "'");
        out << "run started; if this file remains, the outputs are partial\n";
    }

    // train sequentially per user, then run all grid cells in a worker pool
    std::vector<UserModels> models;
    models.reserve(static_cast<std::size_t>(config.users));
    for (int u = 0; u < config.users; ++u) {
        try {
            models.push_back(train_user_models(user_trace(config, u), config));
        } catch (const std::exception& e) {
            throw std::runtime_error("training failed for user " + std::to_string(u) + ": " +
                                     e.what());
        }
    }

    struct Cell {
        int user;
        int alpha_index;   // -1 = baseline
        int mode_index;
    };
    std::vector<Cell> cells;
    for (int u = 0; u < config.users; ++u) {
        for (std::size_t a = 0; a < config.alphas.size(); ++a)
            for (std::size_t m = 0; m < config.modes.size(); ++m)
                cells.push_back({u, static_cast<int>(a), static_cast<int>(m)});
        cells.push_back({u, -1, -1});
    }

    std::vector<UserResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string failure_message;
    std::mutex failure_mutex;

    const Eigen::VectorXd costs = sensor_costs(config.sensors);
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size() || failed.load()) return;
            const Cell& cell = cells[i];
            try {
                const UserModels& um = models[static_cast<std::size_t>(cell.user)];
                StepLog log;
                StepLog* log_ptr = config.verbose ? &log : nullptr;
                SimulationResult r;
                if (cell.alpha_index < 0) {
                    BaselineConfig bc;
                    bc.alpha_param = config.baseline_alpha_param;
                    bc.max_dist = config.extension.max_dist;
                    bc.costs = costs;
                    bc.threshold = um.event_threshold;
                    r = run_baseline(um.test, um.context_model, bc, log_ptr);
                } else {
                    ObjectiveConfig oc{config.alphas[static_cast<std::size_t>(cell.alpha_index)],
                                       config.extension.max_dist, costs};
                    r = run_simulation(um.test, um.context_model, um.loss_model, oc,
                                       config.modes[static_cast<std::size_t>(cell.mode_index)],
                                       log_ptr);
                }
                if (config.verbose)
                    write_step_log_csv(step_log_path(config, cell.user, r), config.sensors, log);
                results[i] = {cell.user, std::move(r)};
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failed = true;
                failure_message = "simulation failed for user " + std::to_string(cell.user) + ": " +
                                  e.what();
                return;
            }
        }
    };

    unsigned n_threads = config.parallelism > 0
                             ? static_cast<unsigned>(config.parallelism)
                             : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(cells.size()));
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed) throw std::runtime_error(failure_message);

    for (int u = 0; u < config.users; ++u) {
        save_autoencoder(context_model_path(dir, u),
                         models[static_cast<std::size_t>(u)].context_model);
        save_info_loss_model(loss_model_path(dir, u),
                             models[static_cast<std::size_t>(u)].loss_model);
    }
    write_results_csv(dir + "/results.csv", results, config.sensors);
    try {
        evaluate_results(results, config, dir);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("evaluation failed: ") + e.what());
    }

    // manifest: config hash + artifact checksums; a rerun with the same
    // config must reproduce the checksums bit for bit
    std::vector<std::string> artifacts{"results.csv", "ranks.csv", "stats.csv", "pairwise.csv",
                                       "tradeoff.csv"};
    for (int u = 0; u < config.users; ++u) {
        artifacts.push_back("context_model_user" + std::to_string(u) + ".json");
        artifacts.push_back("loss_model_user" + std::to_string(u) + ".json");
    }

    json manifest;
    manifest["config_hash"] = hex64(fnv1a64(canonical_config_json(config)));
    manifest["seed"] = config.seed;
    json checksums;
    for (const auto& name : artifacts) checksums[name] = hex64(file_hash(dir + "/" + name));
    manifest["artifacts"] = checksums;

    const std::string manifest_file = dir + "/manifest.json";
    if (fs::exists(manifest_file)) {
        std::ifstream in(manifest_file);
        json previous;
        try {
            in >> previous;
        } catch (const std::exception&) {
            throw std::runtime_error("manifest: existing '" + manifest_file + "' is unreadable");
        }
        if (previous.value("config_hash", "") == manifest["config_hash"].get<std::string>()) {
            for (const auto& [name, checksum] : previous.at("artifacts").items()) {
                if (!checksums.contains(name) ||
                    checksums[name].get<std::string>() != checksum.get<std::string>())
                    throw std::runtime_error("manifest mismatch: artifact '" + name +
                                             "' differs from the previous run with the same config");
            }
        }
    }
    std::ofstream out(manifest_file);
    if (!out) throw std::runtime_error("manifest: cannot write '" + manifest_file + "'");
    out << manifest.dump(2) << "\n";
    out.close();
    fs::remove(marker);
}

}  // namespace ctxsense
