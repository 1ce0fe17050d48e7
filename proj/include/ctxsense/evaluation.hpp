#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

namespace ctxsense {

/// One simulation as a point in (information loss, cost) space.
struct RunPoint {
    std::string method;
    double info_loss = 0.0;
    double cost = 0.0;
};

/// Iterative Pareto-frontier peeling under (<=, <=) domination with at least
/// one strict coordinate: the non-dominated set gets rank 1, is removed, and
/// the process repeats with increasing rank until no points remain.
std::vector<int> pareto_rank(const std::vector<RunPoint>& points);

/// 1-based ranks of scores (ascending, ties share the average rank).
std::vector<double> average_ranks(const std::vector<double>& scores);

struct FriedmanResult {
    double chi2 = 0.0;  // Friedman chi-square over mean ranks
    double ff = 0.0;    // Iman-Davenport F statistic
};

/// From an N x k matrix of per-block ranks (rows = blocks, columns = methods).
FriedmanResult friedman_iman_davenport(const Eigen::MatrixXd& rank_matrix);

/// Same statistic computed directly from mean ranks over n_blocks blocks.
FriedmanResult friedman_from_mean_ranks(const std::vector<double>& mean_ranks, int n_blocks);

/// Nemenyi critical difference q_alpha * sqrt(k(k+1)/(6N)); the studentized
/// range quantile q_alpha is caller-supplied.
double nemenyi_critical_difference(int k, int n_blocks, double q_alpha);

struct TTestResult {
    double t = 0.0;
    int df = 0;
};

/// Paired t statistic on differences a - b (sample standard deviation);
/// the significance decision is left to the caller.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace ctxsense
