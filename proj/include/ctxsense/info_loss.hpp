#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "ctxsense/data_extension.hpp"
#include "ctxsense/latent_context.hpp"

namespace ctxsense {

/// KL(P || Q) in bits. Q is floored at 1e-10 and renormalized before the sum,
/// guarding degenerate persisted models; softmax outputs never hit the floor.
double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Regression feature layout for a context of size n and distance vector of
/// size m: [C_1..C_n, D_1..D_m, C_1^2..C_n^2, D_1^2..D_m^2,
/// C_1*D_1..C_n*D_m (i-major)]; length 2n + 2m + n*m.
Eigen::VectorXd transform_features(const Eigen::VectorXd& context, const Eigen::VectorXd& distances);

inline Eigen::Index regression_feature_count(Eigen::Index n, Eigen::Index m) {
    return 2 * n + 2 * m + n * m;
}

/// Information-loss regression with nonnegative coefficients and no intercept.
struct InfoLossModel {
    int n = 0;  // context dimension
    int m = 0;  // sensor count
    double lambda = 0.0;
    Eigen::VectorXd coefficients;  // raw-space, aligned to transform_features

    double predict(const Eigen::VectorXd& context, const Eigen::VectorXd& distances_real) const;

    /// d(predicted loss)/dD_j at D = 0 interactions folded in:
    /// slope_j(C) = b_d_j + sum_i b_cd_ij * C_i.
    Eigen::VectorXd distance_slope(const Eigen::VectorXd& context) const;
    /// Quadratic distance coefficients b_sd (per sensor).
    Eigen::VectorXd distance_quadratic() const;

    // raw-space coefficient views
    double coef_context(int i) const { return coefficients[i]; }
    double coef_distance(int j) const { return coefficients[n + j]; }
    double coef_context_sq(int i) const { return coefficients[n + m + i]; }
    double coef_distance_sq(int j) const { return coefficients[2 * n + m + j]; }
    double coef_interaction(int i, int j) const { return coefficients[2 * n + 2 * m + i * m + j]; }
};

struct LabeledRows {
    Eigen::MatrixXd features;  // one row per extended record
    Eigen::VectorXd labels;    // KL(actual context || degraded context), bits
    int n = 0;
    int m = 0;
};

/// Training set for the loss regression: per extended record, features use the ACTUAL
/// record's context (block-leading row) with the record's distances, and the
/// label is the KL divergence from that actual context to the record's own
/// context. Labels below 1e-12 are clamped to 0.
LabeledRows build_training_set(const std::vector<std::pair<LatentContext, DistanceVector>>& pairs,
                               const ExtensionConfig& config);

struct LassoConfig {
    double lambda = 1e-3;
    double tolerance = 1e-9;
    int max_sweeps = 10000;
};

struct LassoDiagnostics {
    int sweeps = 0;
    double final_max_delta = 0.0;
    std::vector<double> objective_per_sweep;  // penalized objective, scaled space
};

/// Cyclic coordinate descent with nonnegative soft-thresholding on
/// (1/2N)*||y - Xb||^2 + lambda*sum(b), b >= 0. Columns are internally scaled
/// to unit root-mean-square (so lambda means the same thing at any dataset
/// size); stored coefficients are rescaled back to raw feature space.
/// Throws on non-convergence after max_sweeps, reporting the residual change.
InfoLossModel train_info_loss(const LabeledRows& rows, const LassoConfig& config,
                              LassoDiagnostics* diagnostics = nullptr);

double predict_info_loss(const InfoLossModel& model, const Eigen::VectorXd& context,
                         const Eigen::VectorXd& distances_real);

/// JSON persistence with a feature-layout version tag.
void save_info_loss_model(const std::string& path, const InfoLossModel& model);
InfoLossModel load_info_loss_model(const std::string& path);

}  // namespace ctxsense
