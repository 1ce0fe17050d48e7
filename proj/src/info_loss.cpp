#include "ctxsense/info_loss.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ctxsense/util.hpp"

namespace ctxsense {

namespace {

constexpr double kQFloor = 1e-10;
constexpr double kLabelClamp = 1e-12;
constexpr double kProbabilityTol = 1e-6;

void check_probability(const Eigen::VectorXd& v, const char* name) {
    if (v.size() == 0) throw std::invalid_argument(std::string("kl_divergence: empty ") + name);
    if (v.minCoeff() < 0.0)
        throw std::invalid_argument(std::string("kl_divergence: ") + name + " has negative entries");
    if (std::abs(v.sum() - 1.0) > kProbabilityTol)
        throw std::invalid_argument(std::string("kl_divergence: ") + name +
                                    " does not sum to 1 (sum=" + format_double(v.sum()) + ")");
}

}  // namespace

double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
    check_probability(p, "P");
    check_probability(q, "Q");
    if (p == q) return 0.0;

    const Eigen::VectorXd q_floored = q.cwiseMax(kQFloor);
    const Eigen::VectorXd q_norm = q_floored / q_floored.sum();

    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log2(p[i] / q_norm[i]);
    }
    // the true value is >= 0; renormalization can leave float dust behind
    if (kl < 0.0 && kl > -1e-12) kl = 0.0;
    return kl;
}

Eigen::VectorXd transform_features(const Eigen::VectorXd& context, const Eigen::VectorXd& distances) {
    const Eigen::Index n = context.size();
    const Eigen::Index m = distances.size();
    if (n == 0 || m == 0) throw std::invalid_argument("transform_features: empty input");
    Eigen::VectorXd f(regression_feature_count(n, m));
    f.segment(0, n) = context;
    f.segment(n, m) = distances;
    f.segment(n + m, n) = context.cwiseAbs2();
    f.segment(2 * n + m, m) = distances.cwiseAbs2();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) f[2 * n + 2 * m + i * m + j] = context[i] * distances[j];
    return f;
}

LabeledRows build_training_set(const std::vector<std::pair<LatentContext, DistanceVector>>& pairs,
                               const ExtensionConfig& config) {
    if (pairs.empty()) throw std::invalid_argument("build_training_set: no pairs");
    const long block = extension_block_size(config);
    if (static_cast<long>(pairs.size()) % block != 0)
        throw std::invalid_argument("build_training_set: pair count " + std::to_string(pairs.size()) +
                                    " is not a multiple of the block size " + std::to_string(block));

    const Eigen::Index n = pairs.front().first.size();
    const auto m = static_cast<Eigen::Index>(pairs.front().second.size());

    LabeledRows rows;
    rows.n = static_cast<int>(n);
    rows.m = static_cast<int>(m);
    rows.features.resize(static_cast<Eigen::Index>(pairs.size()), regression_feature_count(n, m));
    rows.labels.resize(static_cast<Eigen::Index>(pairs.size()));

    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const long block_start = (static_cast<long>(i) / block) * block;
        const LatentContext& actual = pairs[static_cast<std::size_t>(block_start)].first;
        const auto& [context, dist] = pairs[i];
        Eigen::VectorXd d_real(m);
        for (Eigen::Index j = 0; j < m; ++j) d_real[j] = dist[static_cast<std::size_t>(j)];

        rows.features.row(static_cast<Eigen::Index>(i)) = transform_features(actual, d_real);
        double label = kl_divergence(actual, context);
        if (label < kLabelClamp) label = 0.0;
        rows.labels[static_cast<Eigen::Index>(i)] = label;
    }
    return rows;
}

InfoLossModel train_info_loss(const LabeledRows& rows, const LassoConfig& config,
                              LassoDiagnostics* diagnostics) {
    const Eigen::Index n_rows = rows.features.rows();
    const Eigen::Index n_cols = rows.features.cols();
    if (n_rows < 1) throw std::invalid_argument("train_info_loss: no rows");
    if (rows.labels.size() != n_rows)
        throw std::invalid_argument("train_info_loss: label/feature row mismatch");
    if (config.lambda < 0) throw std::invalid_argument("train_info_loss: negative lambda");
    if (config.tolerance <= 0) throw std::invalid_argument("train_info_loss: tolerance must be > 0");

    // scale columns to unit root-mean-square so the soft-threshold stays
    // comparable across columns and dataset sizes; zero columns stay out
    const double big_n = static_cast<double>(n_rows);
    Eigen::VectorXd col_scale(n_cols);
    Eigen::MatrixXd x = rows.features;
    for (Eigen::Index j = 0; j < n_cols; ++j) {
        const double scale = x.col(j).norm() / std::sqrt(big_n);
        col_scale[j] = scale;
        if (scale > 0) x.col(j) /= scale;
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(n_cols);
    Eigen::VectorXd residual = rows.labels;

    if (diagnostics) {
        diagnostics->objective_per_sweep.clear();
        diagnostics->objective_per_sweep.push_back(residual.squaredNorm() / (2.0 * big_n));
    }

    int sweep = 0;
    double max_delta = 0.0;
    bool converged = false;
    for (; sweep < config.max_sweeps; ++sweep) {
        max_delta = 0.0;
        for (Eigen::Index j = 0; j < n_cols; ++j) {
            if (col_scale[j] == 0.0) continue;
            // with x_j^T x_j = N the coordinate update is a plain shifted
            // soft-threshold clipped at zero
            const double rho = x.col(j).dot(residual) / big_n + beta[j];
            const double updated = std::max(0.0, rho - config.lambda);
            const double delta = updated - beta[j];
            if (delta != 0.0) {
                residual -= delta * x.col(j);
                beta[j] = updated;
            }
            max_delta = std::max(max_delta, std::abs(delta));
        }
        if (diagnostics)
            diagnostics->objective_per_sweep.push_back(residual.squaredNorm() / (2.0 * big_n) +
                                                       config.lambda * beta.sum());
        if (max_delta < config.tolerance) {
            converged = true;
            ++sweep;
            break;
        }
    }
    if (!converged)
        throw std::runtime_error("train_info_loss: no convergence after " +
                                 std::to_string(config.max_sweeps) +
                                 " sweeps (last max coefficient change " + format_double(max_delta) +
                                 ", residual norm " + format_double(residual.norm()) + ")");
    if (diagnostics) {
        diagnostics->sweeps = sweep;
        diagnostics->final_max_delta = max_delta;
    }

    InfoLossModel model;
    model.n = rows.n;
    model.m = rows.m;
    model.lambda = config.lambda;
    model.coefficients.resize(n_cols);
    for (Eigen::Index j = 0; j < n_cols; ++j)
        model.coefficients[j] = col_scale[j] > 0 ? beta[j] / col_scale[j] : 0.0;
    return model;
}

double InfoLossModel::predict(const Eigen::VectorXd& context,
                              const Eigen::VectorXd& distances_real) const {
    if (context.size() != n || distances_real.size() != m)
        throw std::invalid_argument("InfoLossModel::predict: dimension mismatch");
    return coefficients.dot(transform_features(context, distances_real));
}

Eigen::VectorXd InfoLossModel::distance_slope(const Eigen::VectorXd& context) const {
    if (context.size() != n) throw std::invalid_argument("distance_slope: dimension mismatch");
    Eigen::VectorXd slope(m);
    for (int j = 0; j < m; ++j) {
        double s = coef_distance(j);
        for (int i = 0; i < n; ++i) s += coef_interaction(i, j) * context[i];
        slope[j] = s;
    }
    return slope;
}

Eigen::VectorXd InfoLossModel::distance_quadratic() const {
    Eigen::VectorXd quad(m);
    for (int j = 0; j < m; ++j) quad[j] = coef_distance_sq(j);
    return quad;
}

double predict_info_loss(const InfoLossModel& model, const Eigen::VectorXd& context,
                         const Eigen::VectorXd& distances_real) {
    return model.predict(context, distances_real);
}

namespace {
constexpr const char* kLossModelVersion = "ctxsense-infoloss-v1";
}

void save_info_loss_model(const std::string& path, const InfoLossModel& model) {
    nlohmann::json j;
    j["version"] = kLossModelVersion;
    j["n"] = model.n;
    j["m"] = model.m;
    j["lambda"] = model.lambda;
    j["coefficients"] =
        std::vector<double>(model.coefficients.data(), model.coefficients.data() + model.coefficients.size());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_info_loss_model: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("save_info_loss_model: write to '" + path + "' failed");
}

InfoLossModel load_info_loss_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_info_loss_model: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    if (j.at("version").get<std::string>() != kLossModelVersion)
        throw std::runtime_error("load_info_loss_model: unsupported version in '" + path + "'");
    InfoLossModel model;
    model.n = j.at("n").get<int>();
    model.m = j.at("m").get<int>();
    model.lambda = j.at("lambda").get<double>();
    const auto coefs = j.at("coefficients").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(coefs.size()) != regression_feature_count(model.n, model.m))
        throw std::runtime_error("load_info_loss_model: coefficient count mismatch in '" + path + "'");
    model.coefficients =
        Eigen::Map<const Eigen::VectorXd>(coefs.data(), static_cast<Eigen::Index>(coefs.size()));
    return model;
}

}  // namespace ctxsense
