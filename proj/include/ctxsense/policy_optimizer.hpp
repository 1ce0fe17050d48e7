#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "ctxsense/info_loss.hpp"

namespace ctxsense {

struct ObjectiveConfig {
    double alpha = 1.0;          // information-loss weight, >= 0
    int max_dist = 1;            // box upper bound, >= 1
    Eigen::VectorXd costs;       // per-sensor, >= 0
};

/// Integer per-sensor sampling distances, each in [1, maxDist].
struct SamplingPolicy {
    std::vector<int> distances;

    bool operator==(const SamplingPolicy&) const = default;
};

struct ContinuousSolution {
    Eigen::VectorXd d_real;      // box-feasible optimum
    double objective_value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Sampling cost sum_i costs_i / D_i. Requires every D_i >= 1.
double sampling_cost(const Eigen::VectorXd& costs, const Eigen::VectorXd& d_real);

/// Objective: sampling_cost + alpha * predicted information loss.
double objective(const Eigen::VectorXd& context, const Eigen::VectorXd& d_real,
                 const ObjectiveConfig& config, const InfoLossModel& model);

double objective(const Eigen::VectorXd& context, const SamplingPolicy& policy,
                 const ObjectiveConfig& config, const InfoLossModel& model);

/// Projected-gradient descent with per-coordinate curvature scaling and
/// Armijo backtracking on the box [1, maxDist]^m, started from the box
/// midpoint; converged when the projected-gradient infinity norm drops below
/// 1e-6. The returned policy is the per-sensor nearest-integer rounding
/// (ties up, the cheaper side).
std::pair<ContinuousSolution, SamplingPolicy> optimize_policy(const Eigen::VectorXd& context,
                                                              const InfoLossModel& model,
                                                              const ObjectiveConfig& config);

/// Exhaustive integer-grid argmin of the objective; verification oracle for
/// small instances (grid of at most 4096 points). Ties break toward the
/// lexicographically largest policy.
SamplingPolicy brute_force_policy(const Eigen::VectorXd& context, const InfoLossModel& model,
                                  const ObjectiveConfig& config);

}  // namespace ctxsense
