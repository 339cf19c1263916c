#include <cmath>
#include <map>
#include <numbers>

#include "doctest.h"
#include "tqflow/errors.hpp"
#include "tqflow/model.hpp"
#include "tqflow/rng.hpp"

using namespace tqflow;

TEST_CASE("throttle on the throttled band and at saturation") {
    CHECK(throttle(std::int64_t{1}, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(throttle(std::int64_t{2}, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(throttle(std::int64_t{0}, 5) == 0.0);
    CHECK(throttle(std::int64_t{7}, 5) == 1.0);
    CHECK(throttle(std::int64_t{-4}, 5) == 0.0);
    CHECK_THROWS_AS(throttle(std::int64_t{1}, 0), InvalidParameter);
    CHECK_THROWS_AS(throttle(1.5, -2), InvalidParameter);
}

TEST_CASE("throttle properties") {
    for (int s = 1; s <= 12; ++s) {
        for (std::int64_t x = -3; x <= 20; ++x) {
            const double v = throttle(x, s);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            CHECK((v == 1.0) == (x >= s));
            CHECK((v == 0.0) == (x <= 0));
            CHECK(throttle(x + 1, s) >= v);
            CHECK(throttle(x, s + 1) <= v);
            // Strictly slower inside the band for a larger threshold.
            if (x >= 1 && x <= s - 1) CHECK(throttle(x, s + 1) < v);
        }
    }
}

TEST_CASE("real-valued throttle matches the integer one at integers") {
    for (int s = 1; s <= 6; ++s) {
        for (int x = -2; x <= 9; ++x) CHECK(throttle(static_cast<double>(x), s) == throttle(std::int64_t{x}, s));
    }
    CHECK(throttle(1.5, 3) == doctest::Approx(0.5));
}

TEST_CASE("transfer rate") {
    CHECK(transfer_rate(2, 3, 10.0) == doctest::Approx(20.0 / 3.0).epsilon(1e-15));
    CHECK(transfer_rate(0, 3, 10.0) == 0.0);
    CHECK(transfer_rate(100, 3, 10.0) == 10.0);
}

TEST_CASE("input schedules") {
    const InputSchedule pw = PiecewiseInput{{{0.0, 6.0}, {30.0, 0.0}}};
    CHECK(input_rate_at(pw, 10.0) == 6.0);
    CHECK(input_rate_at(pw, 40.0) == 0.0);
    CHECK(input_rate_at(pw, 30.0) == 0.0);  // right-continuous
    CHECK(input_rate_at(pw, 0.0) == 6.0);
    CHECK(input_rate_at(ConstantInput{0.0}, 123.0) == 0.0);

    const InputSchedule sine = SinusoidInput{1.0, 5.0, 1.0};
    CHECK(input_rate_at(sine, 1.5 * std::numbers::pi) == 0.0);
    CHECK(input_rate_at(sine, 0.5 * std::numbers::pi) == doctest::Approx(6.0));
    CHECK(input_rate_bound(sine, 0.0, 1.0) == doctest::Approx(6.0));

    CHECK(input_rate_bound(pw, 31.0, 50.0) == 0.0);
    CHECK(input_rate_bound(pw, 10.0, 50.0) == 6.0);
    CHECK(next_input_change(pw, 10.0).value() == 30.0);
    CHECK_FALSE(next_input_change(pw, 30.0).has_value());
    CHECK(input_breakpoints(pw, 0.0, 100.0) == std::vector<double>{30.0});
    CHECK(input_breakpoints(pw, 0.0, 30.0).empty());

    CHECK(is_time_invariant(ConstantInput{3.0}));
    CHECK_FALSE(is_time_invariant(pw));
    CHECK(is_time_invariant(PiecewiseInput{{{0.0, 2.0}, {5.0, 2.0}}}));

    CHECK_THROWS_AS(validate(PiecewiseInput{{{0.0, 6.0}, {0.0, 1.0}}}), InvalidParameter);
    CHECK_THROWS_AS(validate(PiecewiseInput{}), InvalidParameter);
    CHECK_THROWS_AS(validate(ConstantInput{-1.0}), InvalidParameter);
}

TEST_CASE("model config validation") {
    CHECK_THROWS_AS(ModelConfig(0, 10.0, ConstantInput{1.0}, UniformThreshold{3}), InvalidParameter);
    CHECK_THROWS_AS(ModelConfig(2, 0.0, ConstantInput{1.0}, UniformThreshold{3}), InvalidParameter);
    CHECK_THROWS_AS(ModelConfig(2, 10.0, ConstantInput{1.0}, UniformThreshold{0}), InvalidParameter);
    CHECK_THROWS_AS(ModelConfig(2, 10.0, ConstantInput{1.0}, PerStageThreshold{{3}}), InvalidParameter);
    const ModelConfig cfg(2, 10.0, ConstantInput{1.0}, PerStageThreshold{{3, 5}});
    CHECK(cfg.threshold(1) == 5);
    CHECK(cfg.stage_rate(1, 2) == doctest::Approx(4.0));
    CHECK(cfg.stage_rate(0, 9) == 10.0);
}

TEST_CASE("rng stream matches the reference implementation") {
    // Values from an independent big-integer implementation of the same
    // derivation rule.
    RngStream rng(42, 7);
    CHECK(rng.next() == 0x0719e15cf3d4342fULL);
    CHECK(rng.next() == 0x40efa5d3e1980cd0ULL);
    CHECK(rng.next() == 0x91756e0af06688e2ULL);
}

TEST_CASE("random thresholds are reproducible and follow the distribution") {
    const RandomThreshold spec{{1, 2, 6, 8}, {0.2, 0.2, 0.2, 0.4}, 2024};
    const auto a = materialize_thresholds(spec, 20);
    CHECK(a == std::vector<int>{2, 8, 8, 8, 8, 8, 8, 8, 1, 8, 8, 8, 2, 8, 8, 6, 8, 2, 6, 8});
    CHECK(materialize_thresholds(spec, 20) == a);

    RandomThreshold other = spec;
    other.seed = 2025;
    CHECK(materialize_thresholds(other, 20) != a);

    const int n = 100000;
    const auto big = materialize_thresholds(spec, n);
    std::map<int, int> hist;
    for (int v : big) ++hist[v];
    for (std::size_t j = 0; j < spec.support.size(); ++j) {
        const double p = spec.probabilities[j];
        const double se = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(hist[spec.support[j]] / double(n) - p) < 4 * se);
    }

    CHECK_THROWS_AS(materialize_thresholds(RandomThreshold{{1, 2}, {0.5, 0.6}, 1}, 3), InvalidParameter);
    CHECK_THROWS_AS(materialize_thresholds(RandomThreshold{{1, 2}, {1.5, -0.5}, 1}, 3), InvalidParameter);
    CHECK_THROWS_AS(materialize_thresholds(RandomThreshold{{1, 2}, {1.0}, 1}, 3), InvalidParameter);
}
