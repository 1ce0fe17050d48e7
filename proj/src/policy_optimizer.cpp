#include "ctxsense/policy_optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxsense {

namespace {

constexpr double kProjGradTol = 1e-6;
constexpr int kMaxIterations = 10000;
constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-18;
constexpr long kMaxGridPoints = 4096;

void check_config(const ObjectiveConfig& c, const InfoLossModel& model) {
    if (c.costs.size() == 0) throw std::invalid_argument("objective: no sensors");
    if (c.costs.minCoeff() < 0) throw std::invalid_argument("objective: negative sensor cost");
    if (c.alpha < 0) throw std::invalid_argument("objective: negative alpha");
    if (c.max_dist < 1) throw std::invalid_argument("objective: maxDist must be >= 1");
    if (model.m != c.costs.size())
        throw std::invalid_argument("objective: model sensor count differs from cost vector");
}

Eigen::VectorXd clamp_to_box(Eigen::VectorXd v, int max_dist) {
    return v.cwiseMax(1.0).cwiseMin(static_cast<double>(max_dist));
}

}  // namespace

double sampling_cost(const Eigen::VectorXd& costs, const Eigen::VectorXd& d_real) {
    if (costs.size() != d_real.size()) throw std::invalid_argument("sampling_cost: size mismatch");
    if (d_real.minCoeff() < 1.0)
        throw std::invalid_argument("sampling_cost: distances must be >= 1");
    return costs.cwiseQuotient(d_real).sum();
}

double objective(const Eigen::VectorXd& context, const Eigen::VectorXd& d_real,
                 const ObjectiveConfig& config, const InfoLossModel& model) {
    return sampling_cost(config.costs, d_real) + config.alpha * model.predict(context, d_real);
}

double objective(const Eigen::VectorXd& context, const SamplingPolicy& policy,
                 const ObjectiveConfig& config, const InfoLossModel& model) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(policy.distances.size()));
    for (std::size_t j = 0; j < policy.distances.size(); ++j)
        d[static_cast<Eigen::Index>(j)] = policy.distances[j];
    return objective(context, d, config, model);
}

std::pair<ContinuousSolution, SamplingPolicy> optimize_policy(const Eigen::VectorXd& context,
                                                              const InfoLossModel& model,
                                                              const ObjectiveConfig& config) {
    check_config(config, model);
    const Eigen::Index m = config.costs.size();

    // the loss model has no cross-distance terms, so its gradient in D is
    // slope_j(C) + 2 * quad_j * D_j per coordinate.
    const Eigen::VectorXd slope = config.alpha * model.distance_slope(context);
    const Eigen::VectorXd quad = config.alpha * model.distance_quadratic();

    const auto eval = [&](const Eigen::VectorXd& d) {
        return objective(context, d, config, model);
    };
    const auto grad = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
        return (-config.costs.array() / d.array().square()).matrix() + slope +
               2.0 * quad.cwiseProduct(d);
    };
    // per-coordinate curvature 2c/D^3 + 2*alpha*quad; the coordinates are
    // independent, so scaling the step by it keeps flat (e.g. zero-cost,
    // near-linear) coordinates moving at their natural scale instead of
    // crawling at the stiffest coordinate's step size
    const auto curvature = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
        return ((2.0 * config.costs.array() / d.array().cube()) + 2.0 * quad.array())
            .max(1e-9)
            .matrix();
    };

    Eigen::VectorXd x = Eigen::VectorXd::Constant(m, (1.0 + config.max_dist) / 2.0);
    double fx = eval(x);

    ContinuousSolution sol;
    sol.converged = false;
    int iter = 0;
    for (; iter < kMaxIterations; ++iter) {
        const Eigen::VectorXd g = grad(x);
        const Eigen::VectorXd projected_step = x - clamp_to_box(x - g, config.max_dist);
        if (projected_step.lpNorm<Eigen::Infinity>() < kProjGradTol) {
            sol.converged = true;
            break;
        }

        const Eigen::VectorXd direction = g.cwiseQuotient(curvature(x));
        double step = 1.0;
        while (true) {
            const Eigen::VectorXd candidate = clamp_to_box(x - step * direction, config.max_dist);
            const double f_candidate = eval(candidate);
            if (!std::isfinite(f_candidate))
                throw std::runtime_error("optimize_policy: non-finite objective in line search");
            const double decrease = g.dot(candidate - x);
            if (decrease < 0.0 && f_candidate <= fx + kArmijo * decrease) {
                x = candidate;
                fx = f_candidate;
                break;
            }
            step *= 0.5;
            if (step < kMinStep) break;  // no progress possible at float resolution
        }
        if (step < kMinStep) break;
    }

    sol.d_real = x;
    sol.objective_value = fx;
    sol.iterations = iter;

    SamplingPolicy policy;
    policy.distances.resize(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
        // nearest integer, halves toward the larger (cheaper) distance
        const int rounded = static_cast<int>(std::floor(x[j] + 0.5));
        policy.distances[static_cast<std::size_t>(j)] =
            std::min(config.max_dist, std::max(1, rounded));
    }
    return {sol, policy};
}

SamplingPolicy brute_force_policy(const Eigen::VectorXd& context, const InfoLossModel& model,
                                  const ObjectiveConfig& config) {
    check_config(config, model);
    const auto m = static_cast<std::size_t>(config.costs.size());

    double points = 1;
    for (std::size_t j = 0; j < m; ++j) points *= config.max_dist;
    if (points > static_cast<double>(kMaxGridPoints))
        throw std::invalid_argument("brute_force_policy: grid of " + std::to_string(points) +
                                    " points exceeds limit of " + std::to_string(kMaxGridPoints));

    // descending enumeration with strict improvement keeps the
    // lexicographically largest policy among ties
    SamplingPolicy current;
    current.distances.assign(m, config.max_dist);
    SamplingPolicy best = current;
    double best_value = objective(context, best, config, model);

    while (true) {
        bool advanced = false;
        std::size_t j = m;
        while (j > 0) {
            --j;
            if (current.distances[j] > 1) {
                --current.distances[j];
                for (std::size_t l = j + 1; l < m; ++l) current.distances[l] = config.max_dist;
                advanced = true;
                break;
            }
        }
        if (!advanced) return best;
        const double value = objective(context, current, config, model);
        if (value < best_value) {
            best_value = value;
            best = current;
        }
    }
}

}  // namespace ctxsense
