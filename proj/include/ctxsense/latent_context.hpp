#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctxsense/data_extension.hpp"
#include "ctxsense/trace_model.hpp"

namespace ctxsense {

enum class Activation { Tanh, Linear };

struct AutoencoderConfig {
    int bottleneck_dim = 8;
    int hidden_dim = 0;  // 0 = ceil(input_dim / 2)
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
    Activation hidden_activation = Activation::Tanh;
};

/// Symmetric autoencoder input -> hidden -> bottleneck -> hidden -> output.
/// Hidden layers use the configured activation, bottleneck and output are
/// linear. The model owns the standardization stats of its training data so
/// encode() can take raw records.
struct AutoencoderModel {
    AutoencoderConfig config;
    StandardizationStats stats;
    Eigen::MatrixXd w1, w2, w3, w4;  // (out x in)
    Eigen::VectorXd b1, b2, b3, b4;

    Eigen::Index input_dim() const { return w1.cols(); }
    Eigen::Index bottleneck_dim() const { return w2.rows(); }
};

struct AutoencoderGradients {
    Eigen::MatrixXd w1, w2, w3, w4;
    Eigen::VectorXd b1, b2, b3, b4;
};

/// A latent context is a probability vector over the bottleneck dimensions
/// (softmax-normalized bottleneck activation).
using LatentContext = Eigen::VectorXd;

Eigen::VectorXd softmax(const Eigen::VectorXd& v);

/// Mean squared reconstruction error over all entries of a batch (rows = records).
double autoencoder_loss(const AutoencoderModel& model, const Eigen::MatrixXd& batch);

/// Analytic backprop gradients of autoencoder_loss.
AutoencoderGradients autoencoder_gradients(const AutoencoderModel& model,
                                           const Eigen::MatrixXd& batch);

/// Mini-batch gradient descent on reconstruction MSE; deterministic under the
/// config seed. `records` rows must already be standardized; `stats` are the
/// fitting stats attached to the model for later raw-record encoding.
/// Throws if the loss turns non-finite, naming the epoch.
AutoencoderModel train_autoencoder(const Eigen::MatrixXd& records,
                                   const StandardizationStats& stats,
                                   const AutoencoderConfig& config);

/// Raw record values -> standardized forward pass to the bottleneck ->
/// softmax. Output entries are strictly positive and sum to 1.
LatentContext encode(const AutoencoderModel& model, const Eigen::VectorXd& record_values);

/// One (context, distances) pair per extended record, order preserved.
std::vector<std::pair<LatentContext, DistanceVector>> detect_contexts(
    const AutoencoderModel& model, const std::vector<ExtendedRecord>& extended);

/// JSON persistence with a version tag; round-trips weights exactly.
void save_autoencoder(const std::string& path, const AutoencoderModel& model);
AutoencoderModel load_autoencoder(const std::string& path);

}  // namespace ctxsense
