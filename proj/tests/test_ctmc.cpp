#include <cmath>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "tqflow/ctmc.hpp"
#include "tqflow/errors.hpp"
#include "tqflow/stationary.hpp"
#include "tqflow/transient.hpp"

using namespace tqflow;

namespace {

LatticeState state_of(std::vector<std::int64_t> counts) { return LatticeState{std::move(counts), 0.0}; }

const InputSchedule kStepInput = PiecewiseInput{{{0.0, 6.0}, {30.0, 0.0}}};

}  // namespace

TEST_CASE("apply_move") {
    CHECK(apply_move(state_of({2, 0, 1}), 1).counts == std::vector<std::int64_t>{1, 1, 1});
    CHECK(apply_move(state_of({2, 0, 1}), 0).counts == std::vector<std::int64_t>{3, 0, 1});
    CHECK(apply_move(state_of({2, 0, 1}), 3).counts == std::vector<std::int64_t>{2, 0, 0});
    CHECK_THROWS_AS(apply_move(state_of({2, 0, 1}), 2), std::logic_error);
    CHECK_THROWS_AS(apply_move(state_of({2, 0, 1}), 4), std::logic_error);
}

TEST_CASE("exact step from the empty lattice") {
    const ModelConfig idle(4, 10.0, ConstantInput{0.0}, UniformThreshold{3});
    RngStream rng(1, 0);
    const auto r = step_exact(LatticeState::empty(4), idle, rng, 25.0);
    CHECK_FALSE(r.channel.has_value());
    CHECK(r.state.time == 25.0);
    CHECK(r.state.total() == 0);

    const ModelConfig fed(4, 10.0, ConstantInput{6.0}, UniformThreshold{3});
    for (std::uint64_t s = 0; s < 200; ++s) {
        RngStream g(9, s);
        const auto e = step_exact(LatticeState::empty(4), fed, g, 1e9);
        REQUIRE(e.channel.has_value());
        CHECK(*e.channel == 0);
        CHECK(e.state.counts[0] == 1);
    }
}

TEST_CASE("exact step channel frequencies follow the rates") {
    const int n = 3;
    const ModelConfig cfg(n, 10.0, ConstantInput{6.0}, UniformThreshold{3});
    const LatticeState start = state_of({3, 3, 3});
    // Rates: input 6, each stage c = 10.
    const std::vector<double> rates = {6.0, 10.0, 10.0, 10.0};
    const double total = 36.0;
    CHECK(total_exit_rate(start, cfg) == doctest::Approx(total));

    const int draws = 100000;
    std::vector<int> hits(n + 1, 0);
    RngStream rng(2024, 0);
    ExactStepper probe(cfg, start);
    for (int i = 0; i < draws; ++i) {
        ExactStepper stepper(cfg, start);
        const auto ch = stepper.step(rng, 1e9);
        REQUIRE(ch.has_value());
        ++hits[static_cast<std::size_t>(*ch)];
    }
    for (int i = 0; i <= n; ++i) {
        const double p = rates[static_cast<std::size_t>(i)] / total;
        const double se = std::sqrt(p * (1 - p) / draws);
        CHECK(std::abs(hits[static_cast<std::size_t>(i)] / double(draws) - p) < 3 * se);
    }
}

TEST_CASE("exact holding times are exponential with the total rate") {
    const ModelConfig cfg(2, 10.0, ConstantInput{6.0}, UniformThreshold{3});
    const LatticeState start = state_of({1, 5});  // rates 6 + 10/3 + 10
    const double total = 6.0 + 10.0 / 3.0 + 10.0;
    RngStream rng(5, 5);
    const int draws = 50000;
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) {
        ExactStepper stepper(cfg, start);
        stepper.step(rng, 1e9);
        sum += stepper.state().time;
    }
    const double se = (1.0 / total) / std::sqrt(double(draws));
    CHECK(std::abs(sum / draws - 1.0 / total) < 3 * se);
}

TEST_CASE("conservation and non-negativity along exact trajectories") {
    const ModelConfig cfg(6, 10.0, kStepInput, PerStageThreshold{{1, 3, 5, 2, 4, 6}});
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        RngStream rng(77, trial);
        ExactStepper stepper(cfg, LatticeState::empty(6));
        while (stepper.step(rng, 60.0)) {
            const auto& s = stepper.state();
            for (auto c : s.counts) REQUIRE(c >= 0);
            REQUIRE(stepper.entered() - stepper.exited() == s.total());
        }
        CHECK(stepper.state().time == 60.0);
    }
}

TEST_CASE("generator diagonal is bounded by (N+1)c") {
    const ModelConfig cfg(5, 4.0, ConstantInput{3.5}, UniformThreshold{2});
    RngStream rng(3, 3);
    for (int i = 0; i < 1000; ++i) {
        LatticeState s = LatticeState::empty(5);
        for (auto& c : s.counts) c = static_cast<std::int64_t>(rng.uniform() * 8);
        double expected = 3.5;
        for (int k = 0; k < 5; ++k) expected += 4.0 * throttle(s.counts[static_cast<std::size_t>(k)], 2);
        CHECK(total_exit_rate(s, cfg) == doctest::Approx(expected));
        CHECK(total_exit_rate(s, cfg) <= 6 * 4.0);
    }
}

TEST_CASE("piecewise input stops arrivals after the breakpoint") {
    const ModelConfig cfg(1, 10.0, PiecewiseInput{{{0.0, 6.0}, {1.0, 0.0}}}, UniformThreshold{1});
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        RngStream rng(8, trial);
        ExactStepper stepper(cfg, LatticeState::empty(1));
        while (auto ch = stepper.step(rng, 5.0)) {
            if (*ch == 0) REQUIRE(stepper.state().time < 1.0);
        }
    }
}

TEST_CASE("fixed step") {
    SUBCASE("zero-rate channels never fire") {
        const ModelConfig idle(3, 10.0, ConstantInput{0.0}, UniformThreshold{3});
        LatticeState s = LatticeState::empty(3);
        RngStream rng(1, 1);
        for (int i = 0; i < 1000; ++i) s = step_fixed(s, idle, 0.01, rng);
        CHECK(s.total() == 0);
        CHECK(s.time == doctest::Approx(10.0));
    }
    SUBCASE("single saturated stage fires with probability c*dt") {
        const ModelConfig cfg(1, 10.0, ConstantInput{0.0}, UniformThreshold{4});
        const int draws = 200000;
        int fired = 0;
        RngStream rng(4, 4);
        for (int i = 0; i < draws; ++i) fired += step_fixed(state_of({4}), cfg, 0.001, rng).counts[0] == 3;
        const double p = 0.01;
        CHECK(std::abs(fired / double(draws) - p) < 3 * std::sqrt(p * (1 - p) / draws));
    }
    SUBCASE("a unit moves at most one stage per step") {
        const ModelConfig cfg(3, 10.0, ConstantInput{0.0}, UniformThreshold{1});
        RngStream rng(6, 6);
        for (int i = 0; i < 2000; ++i) {
            const auto s = step_fixed(state_of({1, 0, 0}), cfg, 0.09, rng);
            CHECK(s.counts[2] == 0);
        }
    }
    SUBCASE("probabilities above one are rejected") {
        const ModelConfig cfg(2, 10.0, ConstantInput{0.0}, UniformThreshold{1});
        RngStream rng(1, 1);
        CHECK_THROWS_AS(step_fixed(state_of({1, 1}), cfg, 0.2, rng), NumericalError);
        const ModelConfig hot(2, 1.0, ConstantInput{50.0}, UniformThreshold{1});
        CHECK_THROWS_AS(step_fixed(state_of({0, 0}), hot, 0.05, rng), NumericalError);
    }
    CHECK(fixed_step_recommended(ModelConfig(9, 10.0, ConstantInput{1.0}, UniformThreshold{1}), 0.01));
    CHECK_FALSE(fixed_step_recommended(ModelConfig(10, 10.0, ConstantInput{1.0}, UniformThreshold{1}), 0.01));
}

TEST_CASE("ensemble: idle system stays empty") {
    const ModelConfig cfg(5, 10.0, ConstantInput{0.0}, UniformThreshold{3});
    const std::vector<double> times = {0.0, 1.0, 7.5};
    for (SimScheme scheme : {SimScheme{ExactSSA{}}, SimScheme{FixedStep{0.01}}}) {
        const auto st = run_ensemble(cfg, scheme, 10.0, times, {50, 1, 1});
        for (std::size_t t = 0; t < times.size(); ++t) {
            for (int k = 0; k < 5; ++k) {
                CHECK(st.mean[t][static_cast<std::size_t>(k)] == 0.0);
                CHECK(st.variance[t][static_cast<std::size_t>(k)] == 0.0);
            }
        }
    }
}

TEST_CASE("ensemble argument checks") {
    const ModelConfig cfg(2, 10.0, ConstantInput{1.0}, UniformThreshold{3});
    const std::vector<double> late = {1.0, 12.0};
    CHECK_THROWS_AS(run_ensemble(cfg, ExactSSA{}, 10.0, late, {10, 1, 1}), InvalidParameter);
    const std::vector<double> unsorted = {3.0, 1.0};
    CHECK_THROWS_AS(run_ensemble(cfg, ExactSSA{}, 10.0, unsorted, {10, 1, 1}), InvalidParameter);
    const std::vector<double> ok = {1.0};
    CHECK_THROWS_AS(run_ensemble(cfg, ExactSSA{}, 10.0, ok, {1, 1, 1}), InvalidParameter);
}

TEST_CASE("ensemble estimators match a direct computation from raw trials") {
    const ModelConfig cfg(3, 10.0, ConstantInput{6.0}, UniformThreshold{3});
    const std::vector<double> times = {0.5, 2.0};
    const EnsembleOptions opts{300, 12, 1};
    const auto raw = collect_trials(cfg, ExactSSA{}, 2.0, times, opts);
    const auto st = run_ensemble(cfg, ExactSSA{}, 2.0, times, opts);
    for (std::size_t t = 0; t < times.size(); ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            double mean = 0.0;
            for (const auto& trial : raw) mean += static_cast<double>(trial[t][k]);
            mean /= static_cast<double>(raw.size());
            double var = 0.0;
            for (const auto& trial : raw) var += (static_cast<double>(trial[t][k]) - mean) * (static_cast<double>(trial[t][k]) - mean);
            var /= static_cast<double>(raw.size() - 1);
            CHECK(st.mean[t][k] == doctest::Approx(mean).epsilon(1e-12));
            CHECK(st.variance[t][k] == doctest::Approx(var).epsilon(1e-12));
            CHECK(st.standard_error(t, k) == doctest::Approx(std::sqrt(var / 300.0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("ensemble is reproducible and independent of the worker count") {
    const ModelConfig cfg(8, 10.0, kStepInput, UniformThreshold{3});
    const std::vector<double> times = {1.0, 5.0};
    const auto a = run_ensemble(cfg, ExactSSA{}, 5.0, times, {500, 99, 1});
    const auto b = run_ensemble(cfg, ExactSSA{}, 5.0, times, {500, 99, 1});
    const auto c = run_ensemble(cfg, ExactSSA{}, 5.0, times, {500, 99, 4});
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    CHECK(a.mean == c.mean);
    CHECK(a.variance == c.variance);
    const auto d = run_ensemble(cfg, ExactSSA{}, 5.0, times, {500, 100, 1});
    CHECK(a.mean != d.mean);
}

TEST_CASE("fixed-step bias shrinks with the step") {
    // Stage 1 of a 10-stage line; exact reference from the transient oracle.
    const ModelConfig cfg(10, 10.0, ConstantInput{6.0}, UniformThreshold{3});
    const ModelConfig first(1, 10.0, ConstantInput{6.0}, UniformThreshold{3});
    const double exact = transient_oracle(first, 60, 2.0, LatticeState::empty(1)).mean[0];
    const std::vector<double> times = {2.0};
    const EnsembleOptions opts{40000, 31, 1};
    const auto coarse = run_ensemble(cfg, FixedStep{0.01}, 2.0, times, opts);
    const auto fine = run_ensemble(cfg, FixedStep{0.001}, 2.0, times, opts);
    const double err_coarse = std::abs(coarse.mean[0][0] - exact);
    const double err_fine = std::abs(fine.mean[0][0] - exact);
    MESSAGE("stage-1 mean error dt=0.01: " << err_coarse << ", dt=0.001: " << err_fine);
    CHECK(err_fine < err_coarse);
    CHECK(err_fine < 3 * fine.standard_error(0, 0));
}

TEST_CASE("fixed-step and exact ensembles agree on the step-input scenario") {
    const ModelConfig cfg(10, 10.0, kStepInput, UniformThreshold{3});
    const std::vector<double> times = {10.0};
    const auto fixed = run_ensemble(cfg, FixedStep{0.001}, 10.0, times, {3000, 5, 1});
    const auto exact = run_ensemble(cfg, ExactSSA{}, 10.0, times, {3000, 6, 1});
    for (std::size_t k = 0; k < 10; ++k) {
        const double se = std::hypot(fixed.standard_error(0, k), exact.standard_error(0, k));
        // Ten simultaneous comparisons: widen 3 SE to a family-wise bound.
        CHECK(std::abs(fixed.mean[0][k] - exact.mean[0][k]) < 3.5 * se);
    }
}

TEST_CASE("stage-1 long-run mean matches the stationary law") {
    const ModelConfig cfg(1, 10.0, ConstantInput{6.0}, UniformThreshold{3});
    const std::vector<double> times = {200.0};
    const auto st = run_ensemble(cfg, ExactSSA{}, 200.0, times, {5000, 17, 1});
    const double expected = stationary_moment(stage_stationary_pmf(6.0, 10.0, 3), 1);
    CHECK(std::abs(st.mean[0][0] - expected) < 3 * st.standard_error(0, 0));
}

TEST_CASE("ensemble CSV layout") {
    EnsembleStats st;
    st.times = {1.0, 2.5};
    st.num_stages = 2;
    st.trials = 4;
    st.mean = {{1.0, 0.5}, {2.0, 0.0}};
    st.variance = {{4.0, 1.0}, {0.0, 0.0}};
    std::ostringstream out;
    write_ensemble_csv(out, st, scheme_source_tag(ExactSSA{}));
    CHECK(out.str() ==
          "time,stage,mean,variance,stderr,trials,source\n"
          "1,1,1,4,1,4,mc-exact\n"
          "1,2,0.5,1,0.5,4,mc-exact\n"
          "2.5,1,2,0,0,4,mc-exact\n"
          "2.5,2,0,0,0,4,mc-exact\n");
    CHECK(scheme_source_tag(FixedStep{0.1}) == "mc-fixed");
}

TEST_CASE("step input: front advances, then mass drains") {
    const ModelConfig cfg(60, 10.0, kStepInput, UniformThreshold{3});
    const std::vector<double> times = {10.0, 30.0, 50.0};
    const auto st = run_ensemble(cfg, ExactSSA{}, 50.0, times, {400, 8, 1});
    auto total = [&](std::size_t t) {
        double s = 0.0;
        for (double m : st.mean[t]) s += m;
        return s;
    };
    auto front = [&](std::size_t t) {
        int f = 0;
        for (int k = 0; k < 60; ++k)
            if (st.mean[t][static_cast<std::size_t>(k)] >= 0.5) f = k + 1;
        return f;
    };
    CHECK(front(1) > front(0));
    CHECK(total(1) > total(0));
    CHECK(total(2) < 0.5 * total(1));
}
