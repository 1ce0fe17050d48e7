#include "ctxsense/latent_context.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "ctxsense/util.hpp"

namespace ctxsense {

namespace {

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& z, Activation a) {
    if (a == Activation::Linear) return z;
    return z.array().tanh();
}

// derivative w.r.t. pre-activation, expressed through the activation value
Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& activated, Activation a) {
    if (a == Activation::Linear) return Eigen::MatrixXd::Ones(activated.rows(), activated.cols());
    return 1.0 - activated.array().square();
}

struct ForwardCache {
    Eigen::MatrixXd a1, a2, a3, out;
};

ForwardCache forward(const AutoencoderModel& m, const Eigen::MatrixXd& x) {
    ForwardCache c;
    const Activation act = m.config.hidden_activation;
    c.a1 = apply_activation((x * m.w1.transpose()).rowwise() + m.b1.transpose(), act);
    c.a2 = (c.a1 * m.w2.transpose()).rowwise() + m.b2.transpose();  // linear bottleneck
    c.a3 = apply_activation((c.a2 * m.w3.transpose()).rowwise() + m.b3.transpose(), act);
    c.out = (c.a3 * m.w4.transpose()).rowwise() + m.b4.transpose();  // linear output
    return c;
}

Eigen::MatrixXd xavier_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = u(rng);
    return w;
}

void check_config(const AutoencoderConfig& c, Eigen::Index input_dim) {
    const int hidden = c.hidden_dim > 0 ? c.hidden_dim : static_cast<int>((input_dim + 1) / 2);
    if (c.bottleneck_dim < 1) throw std::invalid_argument("autoencoder: bottleneck_dim must be >= 1");
    if (c.bottleneck_dim > hidden)
        throw std::invalid_argument("autoencoder: bottleneck_dim exceeds hidden_dim");
    if (hidden > input_dim)
        throw std::invalid_argument("autoencoder: hidden_dim exceeds input_dim");
    if (c.epochs < 0) throw std::invalid_argument("autoencoder: negative epochs");
    if (c.batch_size < 1) throw std::invalid_argument("autoencoder: batch_size must be >= 1");
    if (c.learning_rate <= 0) throw std::invalid_argument("autoencoder: learning_rate must be > 0");
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
    const Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
    return e / e.sum();
}

double autoencoder_loss(const AutoencoderModel& model, const Eigen::MatrixXd& batch) {
    const auto c = forward(model, batch);
    return (c.out - batch).squaredNorm() / static_cast<double>(batch.rows() * batch.cols());
}

AutoencoderGradients autoencoder_gradients(const AutoencoderModel& model,
                                           const Eigen::MatrixXd& batch) {
    const Activation act = model.config.hidden_activation;
    const auto c = forward(model, batch);
    const double scale = 2.0 / static_cast<double>(batch.rows() * batch.cols());

    AutoencoderGradients g;
    const Eigen::MatrixXd d_out = scale * (c.out - batch);
    g.w4 = d_out.transpose() * c.a3;
    g.b4 = d_out.colwise().sum();

    const Eigen::MatrixXd d_a3 = d_out * model.w4;
    const Eigen::MatrixXd d_z3 = d_a3.cwiseProduct(activation_grad(c.a3, act));
    g.w3 = d_z3.transpose() * c.a2;
    g.b3 = d_z3.colwise().sum();

    const Eigen::MatrixXd d_z2 = d_z3 * model.w3;  // bottleneck is linear
    g.w2 = d_z2.transpose() * c.a1;
    g.b2 = d_z2.colwise().sum();

    const Eigen::MatrixXd d_a1 = d_z2 * model.w2;
    const Eigen::MatrixXd d_z1 = d_a1.cwiseProduct(activation_grad(c.a1, act));
    g.w1 = d_z1.transpose() * batch;
    g.b1 = d_z1.colwise().sum();
    return g;
}

AutoencoderModel train_autoencoder(const Eigen::MatrixXd& records,
                                   const StandardizationStats& stats,
                                   const AutoencoderConfig& config) {
    const Eigen::Index n = records.rows();
    const Eigen::Index d = records.cols();
    if (n < config.batch_size)
        throw std::invalid_argument("train_autoencoder: need at least batch_size records");
    if (stats.mean.size() != d)
        throw std::invalid_argument("train_autoencoder: stats dimension mismatch");
    check_config(config, d);

    const Eigen::Index hidden =
        config.hidden_dim > 0 ? config.hidden_dim : (d + 1) / 2;
    const Eigen::Index bottleneck = config.bottleneck_dim;

    AutoencoderModel model;
    model.config = config;
    model.config.hidden_dim = static_cast<int>(hidden);
    model.stats = stats;

    std::mt19937_64 rng(stream_seed(config.seed, 0xae1));
    model.w1 = xavier_init(hidden, d, rng);
    model.w2 = xavier_init(bottleneck, hidden, rng);
    model.w3 = xavier_init(hidden, bottleneck, rng);
    model.w4 = xavier_init(d, hidden, rng);
    model.b1 = Eigen::VectorXd::Zero(hidden);
    model.b2 = Eigen::VectorXd::Zero(bottleneck);
    model.b3 = Eigen::VectorXd::Zero(hidden);
    model.b4 = Eigen::VectorXd::Zero(d);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(stream_seed(config.seed, 0xae2));

    const double lr = config.learning_rate;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index bsz = std::min<Eigen::Index>(config.batch_size, n - start);
            Eigen::MatrixXd batch(bsz, d);
            for (Eigen::Index i = 0; i < bsz; ++i)
                batch.row(i) = records.row(order[static_cast<std::size_t>(start + i)]);

            const double loss = autoencoder_loss(model, batch);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_autoencoder: non-finite loss at epoch " +
                                         std::to_string(epoch));
            const auto g = autoencoder_gradients(model, batch);
            model.w1 -= lr * g.w1;
            model.w2 -= lr * g.w2;
            model.w3 -= lr * g.w3;
            model.w4 -= lr * g.w4;
            model.b1 -= lr * g.b1;
            model.b2 -= lr * g.b2;
            model.b3 -= lr * g.b3;
            model.b4 -= lr * g.b4;
        }
    }
    return model;
}

LatentContext encode(const AutoencoderModel& model, const Eigen::VectorXd& record_values) {
    if (record_values.size() != model.input_dim())
        throw std::invalid_argument("encode: record has " + std::to_string(record_values.size()) +
                                    " features, model expects " + std::to_string(model.input_dim()));
    const Eigen::VectorXd x = standardize_values(record_values, model.stats);
    const Activation act = model.config.hidden_activation;
    Eigen::VectorXd a1 = model.w1 * x + model.b1;
    if (act == Activation::Tanh) a1 = a1.array().tanh();
    const Eigen::VectorXd bottleneck = model.w2 * a1 + model.b2;
    return softmax(bottleneck);
}

std::vector<std::pair<LatentContext, DistanceVector>> detect_contexts(
    const AutoencoderModel& model, const std::vector<ExtendedRecord>& extended) {
    std::vector<std::pair<LatentContext, DistanceVector>> out;
    out.reserve(extended.size());
    for (const auto& rec : extended)
        out.emplace_back(encode(model, rec.values), rec.distances);
    return out;
}

namespace {

constexpr const char* kModelVersion = "ctxsense-autoencoder-v1";

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["data"] = std::move(data);  // row-major
    return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw std::runtime_error("model file: matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace

void save_autoencoder(const std::string& path, const AutoencoderModel& model) {
    nlohmann::json j;
    j["version"] = kModelVersion;
    j["config"] = {
        {"bottleneck_dim", model.config.bottleneck_dim},
        {"hidden_dim", model.config.hidden_dim},
        {"epochs", model.config.epochs},
        {"batch_size", model.config.batch_size},
        {"learning_rate", model.config.learning_rate},
        {"seed", model.config.seed},
        {"hidden_activation", model.config.hidden_activation == Activation::Tanh ? "tanh" : "linear"},
    };
    j["stats"] = {{"mean", vector_to_json(model.stats.mean)}, {"std", vector_to_json(model.stats.std)}};
    j["w1"] = matrix_to_json(model.w1);
    j["w2"] = matrix_to_json(model.w2);
    j["w3"] = matrix_to_json(model.w3);
    j["w4"] = matrix_to_json(model.w4);
    j["b1"] = vector_to_json(model.b1);
    j["b2"] = vector_to_json(model.b2);
    j["b3"] = vector_to_json(model.b3);
    j["b4"] = vector_to_json(model.b4);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_autoencoder: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("save_autoencoder: write to '" + path + "' failed");
}

AutoencoderModel load_autoencoder(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_autoencoder: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    if (j.at("version").get<std::string>() != kModelVersion)
        throw std::runtime_error("load_autoencoder: unsupported version in '" + path + "'");

    AutoencoderModel m;
    const auto& jc = j.at("config");
    m.config.bottleneck_dim = jc.at("bottleneck_dim").get<int>();
    m.config.hidden_dim = jc.at("hidden_dim").get<int>();
    m.config.epochs = jc.at("epochs").get<int>();
    m.config.batch_size = jc.at("batch_size").get<int>();
    m.config.learning_rate = jc.at("learning_rate").get<double>();
    m.config.seed = jc.at("seed").get<std::uint64_t>();
    m.config.hidden_activation =
        jc.at("hidden_activation").get<std::string>() == "linear" ? Activation::Linear : Activation::Tanh;
    m.stats.mean = vector_from_json(j.at("stats").at("mean"));
    m.stats.std = vector_from_json(j.at("stats").at("std"));
    m.w1 = matrix_from_json(j.at("w1"));
    m.w2 = matrix_from_json(j.at("w2"));
    m.w3 = matrix_from_json(j.at("w3"));
    m.w4 = matrix_from_json(j.at("w4"));
    m.b1 = vector_from_json(j.at("b1"));
    m.b2 = vector_from_json(j.at("b2"));
    m.b3 = vector_from_json(j.at("b3"));
    m.b4 = vector_from_json(j.at("b4"));
    return m;
}

}  // namespace ctxsense
