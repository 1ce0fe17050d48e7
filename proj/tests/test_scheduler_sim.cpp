#include <doctest.h>

#include <random>

#include "ctxsense/scheduler_sim.hpp"

using namespace ctxsense;

namespace {

// layout: 2 sensors x 2 features; regime-switching synthetic trace
Trace demo_trace(long n_records, std::uint64_t seed) {
    std::vector<SensorSpec> layout{{"a", {"x", "y"}, 4.0}, {"b", {"u", "v"}, 1.0}};
    SyntheticTraceConfig gen;
    gen.n_records = n_records;
    gen.n_regimes = 3;
    gen.switch_prob = 0.1;
    gen.noise_std = 0.3;
    gen.seed = seed;
    return generate_synthetic_trace(layout, gen);
}

AutoencoderModel demo_context_model(const Trace& trace) {
    const auto stats = fit_standardization(trace);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(trace.records.size()), 4);
    for (std::size_t i = 0; i < trace.records.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) = standardize_values(trace.records[i].values, stats);
    AutoencoderConfig config;
    config.bottleneck_dim = 2;
    config.hidden_dim = 2;
    config.epochs = 15;
    config.batch_size = 16;
    config.learning_rate = 0.02;
    config.seed = 7;
    return train_autoencoder(x, stats, config);
}

InfoLossModel loss_model_with_slope(int n, int m, double slope) {
    InfoLossModel model;
    model.n = n;
    model.m = m;
    model.coefficients = Eigen::VectorXd::Zero(regression_feature_count(n, m));
    for (int j = 0; j < m; ++j) model.coefficients[n + j] = slope;
    return model;
}

}  // namespace

TEST_CASE("set_policy_timer follows the worked example") {
    const SamplingPolicy policy{{1, 5, 6}};
    CHECK(set_policy_timer(TimingMode::Max, policy) == 6);
    CHECK(set_policy_timer(TimingMode::Avg, policy) == 4);
    CHECK(set_policy_timer(TimingMode::Min, policy) == 1);
    CHECK(set_policy_timer(TimingMode::Never, policy) == std::nullopt);

    const SamplingPolicy single{{7}};
    CHECK(set_policy_timer(TimingMode::Max, single) == 7);
    CHECK(set_policy_timer(TimingMode::Avg, single) == 7);
    CHECK(set_policy_timer(TimingMode::Min, single) == 7);
}

TEST_CASE("update_time_to_sample reconciliation") {
    SUBCASE("no previous policy adopts the new one") {
        CHECK(update_time_to_sample({{3, 2}}, std::nullopt, {9, 9}) == std::vector<int>{3, 2});
    }
    SUBCASE("unchanged policy keeps the countdowns") {
        const SamplingPolicy p{{4, 2}};
        CHECK(update_time_to_sample(p, p, {1, 0}) == std::vector<int>{1, 0});
    }
    SUBCASE("fresh sensors restart at the new policy value") {
        CHECK(update_time_to_sample({{4}}, SamplingPolicy{{5}}, {0}) == std::vector<int>{4});
    }
    SUBCASE("elapsed time carries over") {
        // prev 5 with countdown 2 means 3 intervals since the last sample
        CHECK(update_time_to_sample({{4}}, SamplingPolicy{{5}}, {2}) == std::vector<int>{1});
    }
    SUBCASE("overdue sensors clamp to zero") {
        CHECK(update_time_to_sample({{3}}, SamplingPolicy{{5}}, {1}) == std::vector<int>{0});
    }
}

TEST_CASE("NEVER mode decides the policy exactly once") {
    const auto trace = demo_trace(120, 1);
    const auto context_model = demo_context_model(trace);
    const auto loss_model = loss_model_with_slope(2, 2, 0.4);
    ObjectiveConfig config{1.0, 8, sensor_costs(trace.sensors)};

    StepLog log;
    const auto result =
        run_simulation(trace, context_model, loss_model, config, TimingMode::Never, &log);
    CHECK(result.policy_change_count == 1);
    for (const auto& step : log) CHECK(step.policy == log.front().policy);
}

TEST_CASE("huge alpha forces continuous sensing with zero loss") {
    const auto trace = demo_trace(100, 2);
    const auto context_model = demo_context_model(trace);
    const auto loss_model = loss_model_with_slope(2, 2, 1.0);
    ObjectiveConfig config{1e6, 8, sensor_costs(trace.sensors)};

    StepLog log;
    const auto result =
        run_simulation(trace, context_model, loss_model, config, TimingMode::Min, &log);
    for (const auto& step : log) CHECK(step.policy == std::vector<int>{1, 1});
    CHECK(result.total_info_loss == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(result.total_cost ==
          doctest::Approx(static_cast<double>(result.steps) * config.costs.sum()));
    CHECK(result.mean_distance == Eigen::Vector2d::Ones());
}

TEST_CASE("alpha zero pins every policy to maxDist with event-log accounting") {
    const auto trace = demo_trace(100, 3);
    const auto context_model = demo_context_model(trace);
    const auto loss_model = loss_model_with_slope(2, 2, 1.0);
    ObjectiveConfig config{0.0, 8, sensor_costs(trace.sensors)};

    StepLog log;
    const auto result =
        run_simulation(trace, context_model, loss_model, config, TimingMode::Min, &log);

    // independent event-log oracle: recompute the cost from the sampling marks
    double replayed_cost = 0.0;
    std::vector<long> events(2, 0);
    for (const auto& step : log) {
        CHECK(step.policy == std::vector<int>{8, 8});
        for (std::size_t s = 0; s < 2; ++s) {
            if (step.sampled[s]) {
                ++events[s];
                replayed_cost += config.costs[static_cast<Eigen::Index>(s)];
            }
        }
    }
    CHECK(result.total_cost == doctest::Approx(replayed_cost));
    // constant policy of 8 over 100 steps: samples at t = 0, 8, ..., 96
    CHECK(events[0] == 13);
    CHECK(events[1] == 13);
}

TEST_CASE("all-ones policy means a sample every step and countdowns stay in bounds") {
    const auto trace = demo_trace(60, 4);
    const auto context_model = demo_context_model(trace);
    const auto loss_model = loss_model_with_slope(2, 2, 5.0);
    ObjectiveConfig config{50.0, 4, sensor_costs(trace.sensors)};

    for (TimingMode mode : {TimingMode::Min, TimingMode::Avg, TimingMode::Max, TimingMode::Never}) {
        StepLog log;
        run_simulation(trace, context_model, loss_model, config, mode, &log);
        for (const auto& step : log) {
            for (std::size_t s = 0; s < 2; ++s) {
                CHECK(step.sampled[s]);
                CHECK(step.time_to_sample_after[s] >= 0);
                CHECK(step.time_to_sample_after[s] <= step.policy[s]);
            }
        }
    }
}

TEST_CASE("sampling period matches the policy distance") {
    // deterministic check on the event grid under a constant policy of 3
    const auto trace = demo_trace(40, 5);
    const auto context_model = demo_context_model(trace);
    InfoLossModel loss_model = loss_model_with_slope(2, 2, 0.0);
    // slope chosen so 4/D + alpha*slope*D has its minimum exactly at D = 3:
    // slope = cost / (alpha * D^2)
    loss_model.coefficients[2] = 4.0 / 9.0;
    loss_model.coefficients[3] = 1.0 / 9.0;
    ObjectiveConfig config{1.0, 8, sensor_costs(trace.sensors)};

    StepLog log;
    run_simulation(trace, context_model, loss_model, config, TimingMode::Never, &log);
    REQUIRE(log.front().policy == std::vector<int>{3, 3});
    for (const auto& step : log) {
        const bool due = step.t % 3 == 0;
        CHECK(step.sampled[0] == due);
        CHECK(step.sampled[1] == due);
    }
}

TEST_CASE("simulation is deterministic") {
    const auto trace = demo_trace(80, 6);
    const auto context_model = demo_context_model(trace);
    const auto loss_model = loss_model_with_slope(2, 2, 0.7);
    ObjectiveConfig config{2.0, 8, sensor_costs(trace.sensors)};
    const auto a = run_simulation(trace, context_model, loss_model, config, TimingMode::Avg);
    const auto b = run_simulation(trace, context_model, loss_model, config, TimingMode::Avg);
    CHECK(a.total_cost == b.total_cost);
    CHECK(a.total_info_loss == b.total_info_loss);
    CHECK(a.mean_distance == b.mean_distance);
    CHECK(a.policy_change_count == b.policy_change_count);
}

TEST_CASE("baseline probability updates follow the adaptation formulas") {
    CHECK(baseline_update_probability(0.5, true, 0.2) == doctest::Approx(0.6));
    CHECK(baseline_update_probability(0.5, false, 0.2) == doctest::Approx(0.4));
    CHECK(baseline_update_probability(0.9, true, 0.2) == doctest::Approx(0.9));  // upper clamp
    CHECK(baseline_update_probability(0.1, false, 0.5) == doctest::Approx(0.1)); // lower clamp
    CHECK_THROWS_AS(baseline_update_probability(0.5, true, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(baseline_update_probability(0.5, true, 1.0), std::invalid_argument);
}

TEST_CASE("baseline probabilities never leave the bounds") {
    std::mt19937_64 rng(12);
    double p = 0.5;
    for (int i = 0; i < 1000; ++i) {
        p = baseline_update_probability(p, rng() % 2 == 0, 0.3);
        CHECK(p >= 0.1);
        CHECK(p <= 0.9);
    }
}

TEST_CASE("baseline distance mapping endpoints") {
    for (int max_dist : {1, 4, 8, 32}) {
        CHECK(baseline_distance(0.9, max_dist) == 1);
        CHECK(baseline_distance(0.1, max_dist) == max_dist);
    }
    CHECK(baseline_distance(0.5, 9) == 5);
}

TEST_CASE("nearest-rank quantile") {
    CHECK(nearest_rank_quantile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.9) == 9.0);
    CHECK(nearest_rank_quantile({5.0}, 0.9) == 5.0);
    CHECK(nearest_rank_quantile({3.0, 1.0, 2.0}, 1.0) == 3.0);
    CHECK_THROWS_AS(nearest_rank_quantile({}, 0.9), std::invalid_argument);
}

TEST_CASE("event threshold on a constant trace is zero") {
    const Trace varied = demo_trace(50, 9);
    const auto model = demo_context_model(varied);

    Trace constant = varied;
    for (auto& r : constant.records) r.values = varied.records.front().values;
    CHECK(compute_event_threshold(constant, model, 0.9) == 0.0);
    CHECK(compute_event_threshold(varied, model, 0.9) >= 0.0);
}

TEST_CASE("baseline on a constant trace decays to maxDist everywhere") {
    const auto varied = demo_trace(50, 10);
    const auto context_model = demo_context_model(varied);

    Trace constant = varied;
    for (auto& r : constant.records) r.values = varied.records.front().values;

    BaselineConfig config;
    config.alpha_param = 0.5;
    config.max_dist = 8;
    config.costs = sensor_costs(varied.sensors);
    config.threshold = compute_event_threshold(constant, context_model, 0.9);  // 0

    StepLog log;
    const auto result = run_baseline(constant, context_model, config, &log);
    // probabilities decay to the 0.1 floor; every distance ends at maxDist
    CHECK(log.back().policy == std::vector<int>{8, 8});
    CHECK(result.total_info_loss == doctest::Approx(0.0));
}

TEST_CASE("baseline with always-interesting events samples continuously") {
    const auto trace = demo_trace(60, 11);
    const auto context_model = demo_context_model(trace);

    BaselineConfig config;
    config.alpha_param = 0.5;
    config.max_dist = 8;
    config.costs = sensor_costs(trace.sensors);
    config.threshold = -1.0;  // every step KL > -1: always interesting

    StepLog log;
    const auto result = run_baseline(trace, context_model, config, &log);
    // p climbs to 0.9 and stays: distance 1, sampled every step from then on
    CHECK(log.back().policy == std::vector<int>{1, 1});
    long continuous_steps = 0;
    for (const auto& step : log)
        if (step.policy == std::vector<int>{1, 1} && step.sampled[0] && step.sampled[1])
            ++continuous_steps;
    CHECK(continuous_steps > 50);
    CHECK(result.method == "baseline");
}

TEST_CASE("baseline accounting matches its own event log") {
    const auto trace = demo_trace(70, 13);
    const auto context_model = demo_context_model(trace);
    BaselineConfig config;
    config.alpha_param = 0.4;
    config.max_dist = 6;
    config.costs = sensor_costs(trace.sensors);
    config.threshold = 0.01;

    StepLog log;
    const auto result = run_baseline(trace, context_model, config, &log);
    double cost = 0.0;
    for (const auto& step : log)
        for (std::size_t s = 0; s < 2; ++s)
            if (step.sampled[s]) cost += config.costs[static_cast<Eigen::Index>(s)];
    CHECK(result.total_cost == doctest::Approx(cost));
}
