#include "ctxsense/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ctxsense {

namespace {

bool dominates(const RunPoint& a, const RunPoint& b) {
    return a.info_loss <= b.info_loss && a.cost <= b.cost &&
           (a.info_loss < b.info_loss || a.cost < b.cost);
}

}  // namespace

std::vector<int> pareto_rank(const std::vector<RunPoint>& points) {
    if (points.empty()) throw std::invalid_argument("pareto_rank: no points");
    std::vector<int> rank(points.size(), 0);
    int current_rank = 1;
    std::size_t remaining = points.size();
    while (remaining > 0) {
        std::vector<std::size_t> frontier;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (rank[i] != 0) continue;
            bool dominated = false;
            for (std::size_t j = 0; j < points.size(); ++j) {
                if (j == i || rank[j] != 0) continue;
                if (dominates(points[j], points[i])) {
                    dominated = true;
                    break;
                }
            }
            if (!dominated) frontier.push_back(i);
        }
        for (std::size_t i : frontier) rank[i] = current_rank;
        remaining -= frontier.size();
        ++current_rank;
    }
    return rank;
}

std::vector<double> average_ranks(const std::vector<double>& scores) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t l = i; l <= j; ++l) ranks[order[l]] = shared;
        i = j + 1;
    }
    return ranks;
}

FriedmanResult friedman_from_mean_ranks(const std::vector<double>& mean_ranks, int n_blocks) {
    const auto k = static_cast<int>(mean_ranks.size());
    if (k < 2) throw std::invalid_argument("friedman: need at least 2 methods");
    if (n_blocks < 2) throw std::invalid_argument("friedman: need at least 2 blocks");

    double sum_sq = 0.0;
    for (double r : mean_ranks) sum_sq += r * r;

    const double n = n_blocks;
    FriedmanResult res;
    res.chi2 = 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0);
    const double denom = n * (k - 1.0) - res.chi2;
    if (std::abs(denom) < 1e-12)
        throw std::domain_error("friedman: degenerate Iman-Davenport denominator (chi2 = N(k-1), "
                                "perfect rank agreement)");
    res.ff = (n - 1.0) * res.chi2 / denom;
    return res;
}

FriedmanResult friedman_iman_davenport(const Eigen::MatrixXd& rank_matrix) {
    if (rank_matrix.rows() < 2 || rank_matrix.cols() < 2)
        throw std::invalid_argument("friedman: rank matrix must be at least 2x2");
    std::vector<double> means(static_cast<std::size_t>(rank_matrix.cols()));
    for (Eigen::Index j = 0; j < rank_matrix.cols(); ++j)
        means[static_cast<std::size_t>(j)] = rank_matrix.col(j).mean();
    return friedman_from_mean_ranks(means, static_cast<int>(rank_matrix.rows()));
}

double nemenyi_critical_difference(int k, int n_blocks, double q_alpha) {
    if (k < 2) throw std::invalid_argument("nemenyi: need at least 2 methods");
    if (n_blocks < 1) throw std::invalid_argument("nemenyi: need at least 1 block");
    if (q_alpha <= 0) throw std::invalid_argument("nemenyi: q_alpha must be > 0");
    return q_alpha * std::sqrt(k * (k + 1.0) / (6.0 * n_blocks));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dev = (a[i] - b[i]) - mean;
        ss += dev * dev;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) throw std::domain_error("paired_t_test: zero-variance differences");

    TTestResult res;
    res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    res.df = static_cast<int>(n) - 1;
    return res;
}

}  // namespace ctxsense
