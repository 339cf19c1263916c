#include "tqflow/ctmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "tqflow/errors.hpp"

namespace tqflow {

namespace {
__extension__ typedef __int128 Wide;
}  // namespace

std::int64_t LatticeState::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

void apply_move(LatticeState& state, int channel) {
    const int n = static_cast<int>(state.counts.size());
    if (channel < 0 || channel > n) throw std::logic_error("move channel out of range");
    if (channel > 0) {
        auto& from = state.counts[static_cast<std::size_t>(channel - 1)];
        if (from < 1) throw std::logic_error("move from empty stage " + std::to_string(channel));
        --from;
    }
    if (channel < n) ++state.counts[static_cast<std::size_t>(channel)];
}

LatticeState apply_move(const LatticeState& state, int channel) {
    LatticeState next = state;
    apply_move(next, channel);
    return next;
}

double total_exit_rate(const LatticeState& state, const ModelConfig& config) {
    double total = config.input_rate(state.time);
    for (int k = 0; k < config.num_stages(); ++k) total += config.stage_rate(k, state.counts[static_cast<std::size_t>(k)]);
    return total;
}

std::string scheme_source_tag(const SimScheme& scheme) {
    return std::holds_alternative<ExactSSA>(scheme) ? "mc-exact" : "mc-fixed";
}

ExactStepper::ExactStepper(const ModelConfig& config, LatticeState state) : config_(&config), state_(std::move(state)) {
    if (state_.counts.size() != static_cast<std::size_t>(config.num_stages())) {
        throw InvalidParameter("lattice state size does not match the number of stages");
    }
    while (leaves_ < state_.counts.size()) leaves_ *= 2;
    tree_.assign(2 * leaves_, 0.0);
    for (std::size_t k = 0; k < state_.counts.size(); ++k) {
        tree_[leaves_ + k] = config.stage_rate(static_cast<int>(k), state_.counts[k]);
    }
    for (std::size_t i = leaves_ - 1; i >= 1; --i) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
}

void ExactStepper::set_leaf(std::size_t stage) {
    std::size_t i = leaves_ + stage;
    tree_[i] = config_->stage_rate(static_cast<int>(stage), state_.counts[stage]);
    for (i /= 2; i >= 1; i /= 2) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
}

void ExactStepper::fire(int channel) {
    apply_move(state_, channel);
    const auto n = state_.counts.size();
    if (channel > 0) set_leaf(static_cast<std::size_t>(channel - 1));
    if (static_cast<std::size_t>(channel) < n) set_leaf(static_cast<std::size_t>(channel));
    if (channel == 0) ++entered_;
    if (static_cast<std::size_t>(channel) == n) ++exited_;
}

std::optional<int> ExactStepper::step(RngStream& rng, double horizon) {
    const auto& input = config_->input();
    const bool piecewise = std::holds_alternative<PiecewiseInput>(input);
    const bool thinning = std::holds_alternative<SinusoidInput>(input);
    for (;;) {
        const double t = state_.time;
        if (t >= horizon) return std::nullopt;
        // Piecewise schedules are split at breakpoints; the input rate is
        // then constant over [t, segment_end).
        double segment_end = horizon;
        if (piecewise) {
            if (auto change = next_input_change(input, t); change && *change < horizon) segment_end = *change;
        }
        const double input_bound = thinning ? input_rate_bound(input, t, segment_end) : config_->input_rate(t);
        const double total = input_bound + tree_[1];
        if (!(total > 0.0)) {
            state_.time = segment_end;
            continue;
        }
        const double tau = rng.exponential(total);
        if (t + tau > segment_end) {
            state_.time = segment_end;
            continue;
        }
        state_.time = t + tau;
        double u = rng.uniform() * total;
        if (u < input_bound) {
            if (thinning && rng.uniform() * input_bound >= config_->input_rate(state_.time)) continue;
            fire(0);
            return 0;
        }
        u -= input_bound;
        std::size_t i = 1;
        while (i < leaves_) {
            if (u < tree_[2 * i] || tree_[2 * i + 1] <= 0.0) {
                i = 2 * i;
            } else {
                u -= tree_[2 * i];
                i = 2 * i + 1;
            }
        }
        std::size_t stage = i - leaves_;
        // Rounding can land on an empty leaf; fall back to the nearest busy stage.
        if (stage >= state_.counts.size() || tree_[i] <= 0.0) {
            stage = std::min(stage, state_.counts.size() - 1);
            while (stage > 0 && tree_[leaves_ + stage] <= 0.0) --stage;
            if (tree_[leaves_ + stage] <= 0.0) {
                while (stage + 1 < state_.counts.size() && tree_[leaves_ + stage] <= 0.0) ++stage;
            }
        }
        const int channel = static_cast<int>(stage) + 1;
        fire(channel);
        return channel;
    }
}

StepResult step_exact(const LatticeState& state, const ModelConfig& config, RngStream& rng, double horizon) {
    ExactStepper stepper(config, state);
    auto channel = stepper.step(rng, horizon);
    return StepResult{stepper.state(), channel};
}

namespace {

void fixed_step_inplace(LatticeState& state, const ModelConfig& config, double dt, RngStream& rng) {
    if (!(dt > 0.0)) throw InvalidParameter("fixed time step must be > 0");
    if (config.max_rate() * dt > 1.0) throw NumericalError("max rate * dt exceeds 1; reduce the time step");
    const double input = config.input_rate(state.time);
    if (input * dt > 1.0) throw NumericalError("input rate * dt exceeds 1; reduce the time step");
    const int n = config.num_stages();
    // Last stage first, so a unit moved into stage k+1 this step has
    // already had its chance to leave.
    for (int k = n - 1; k >= 0; --k) {
        const auto count = state.counts[static_cast<std::size_t>(k)];
        if (count <= 0) continue;
        if (rng.uniform() < config.stage_rate(k, count) * dt) apply_move(state, k + 1);
    }
    if (input > 0.0 && rng.uniform() < input * dt) apply_move(state, 0);
    state.time += dt;
}

void check_sample_times(std::span<const double> sample_times, double horizon) {
    if (sample_times.empty()) throw InvalidParameter("at least one sample time is required");
    for (std::size_t i = 0; i < sample_times.size(); ++i) {
        if (!(sample_times[i] >= 0.0)) throw InvalidParameter("sample times must be >= 0");
        if (i > 0 && sample_times[i] < sample_times[i - 1]) throw InvalidParameter("sample times must be sorted");
    }
    if (sample_times.back() > horizon) throw InvalidParameter("horizon is before the last sample time");
}

unsigned resolve_workers(unsigned requested, std::int64_t trials) {
    unsigned w = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
    return static_cast<unsigned>(std::min<std::int64_t>(w, std::max<std::int64_t>(trials, 1)));
}

// Runs body(trial) for every trial index across `workers` threads.
template <typename Body>
void parallel_trials(std::int64_t trials, unsigned workers, Body&& body) {
    std::atomic<std::int64_t> next{0};
    constexpr std::int64_t chunk = 64;
    auto worker = [&](unsigned id) {
        for (;;) {
            const std::int64_t begin = next.fetch_add(chunk);
            if (begin >= trials) return;
            const std::int64_t end = std::min(trials, begin + chunk);
            for (std::int64_t trial = begin; trial < end; ++trial) body(id, trial);
        }
    };
    if (workers <= 1) {
        worker(0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned id = 0; id < workers; ++id) pool.emplace_back(worker, id);
    for (auto& th : pool) th.join();
}

}  // namespace

LatticeState step_fixed(const LatticeState& state, const ModelConfig& config, double dt, RngStream& rng) {
    LatticeState next = state;
    fixed_step_inplace(next, config, dt, rng);
    return next;
}

bool fixed_step_recommended(const ModelConfig& config, double dt) {
    return dt * (config.num_stages() + 1) * config.max_rate() <= 1.0;
}

std::vector<std::vector<std::int64_t>> simulate_trial(const ModelConfig& config, const SimScheme& scheme,
                                                      std::span<const double> sample_times, RngStream& rng) {
    std::vector<std::vector<std::int64_t>> out;
    out.reserve(sample_times.size());
    if (std::holds_alternative<ExactSSA>(scheme)) {
        ExactStepper stepper(config, LatticeState::empty(config.num_stages()));
        for (double ts : sample_times) {
            while (stepper.step(rng, ts)) {
            }
            out.push_back(stepper.state().counts);
        }
        return out;
    }
    const double dt = std::get<FixedStep>(scheme).dt;
    if (!(dt > 0.0)) throw InvalidParameter("fixed time step must be > 0");
    LatticeState state = LatticeState::empty(config.num_stages());
    std::int64_t steps = 0;
    for (double ts : sample_times) {
        const auto target = static_cast<std::int64_t>(std::floor(ts / dt + 1e-9));
        while (steps < target) {
            state.time = static_cast<double>(steps) * dt;
            fixed_step_inplace(state, config, dt, rng);
            ++steps;
        }
        out.push_back(state.counts);
    }
    return out;
}

double EnsembleStats::standard_error(std::size_t time, std::size_t stage) const {
    return std::sqrt(variance[time][stage] / static_cast<double>(trials));
}

EnsembleStats run_ensemble(const ModelConfig& config, const SimScheme& scheme, double horizon,
                           std::span<const double> sample_times, const EnsembleOptions& options) {
    check_sample_times(sample_times, horizon);
    if (options.trials < 2) throw InvalidParameter("an ensemble needs at least 2 trials");
    const auto n_times = sample_times.size();
    const auto n_stages = static_cast<std::size_t>(config.num_stages());
    const unsigned workers = resolve_workers(options.workers, options.trials);

    struct Sums {
        std::vector<std::int64_t> sum;
        std::vector<std::int64_t> sum_sq;
    };
    std::vector<Sums> partial(workers, Sums{std::vector<std::int64_t>(n_times * n_stages, 0),
                                            std::vector<std::int64_t>(n_times * n_stages, 0)});
    parallel_trials(options.trials, workers, [&](unsigned id, std::int64_t trial) {
        RngStream rng(options.seed, static_cast<std::uint64_t>(trial));
        const auto samples = simulate_trial(config, scheme, sample_times, rng);
        auto& acc = partial[id];
        for (std::size_t t = 0; t < n_times; ++t) {
            for (std::size_t k = 0; k < n_stages; ++k) {
                const auto x = samples[t][k];
                acc.sum[t * n_stages + k] += x;
                acc.sum_sq[t * n_stages + k] += x * x;
            }
        }
    });

    EnsembleStats stats;
    stats.times.assign(sample_times.begin(), sample_times.end());
    stats.num_stages = config.num_stages();
    stats.trials = options.trials;
    stats.mean.assign(n_times, std::vector<double>(n_stages));
    stats.variance.assign(n_times, std::vector<double>(n_stages));
    const auto m = static_cast<Wide>(options.trials);
    for (std::size_t i = 0; i < n_times * n_stages; ++i) {
        Wide sum = 0;
        Wide sum_sq = 0;
        for (const auto& p : partial) {
            sum += p.sum[i];
            sum_sq += p.sum_sq[i];
        }
        // M*sum_sq - sum^2 is exact and non-negative.
        const Wide centered = m * sum_sq - sum * sum;
        stats.mean[i / n_stages][i % n_stages] =
            static_cast<double>(static_cast<long double>(sum) / static_cast<long double>(m));
        stats.variance[i / n_stages][i % n_stages] =
            static_cast<double>(static_cast<long double>(centered) / static_cast<long double>(m * (m - 1)));
    }
    return stats;
}

std::vector<std::vector<std::vector<std::int64_t>>> collect_trials(const ModelConfig& config,
                                                                   const SimScheme& scheme, double horizon,
                                                                   std::span<const double> sample_times,
                                                                   const EnsembleOptions& options) {
    check_sample_times(sample_times, horizon);
    if (options.trials < 1) throw InvalidParameter("at least one trial is required");
    std::vector<std::vector<std::vector<std::int64_t>>> out(static_cast<std::size_t>(options.trials));
    parallel_trials(options.trials, resolve_workers(options.workers, options.trials), [&](unsigned, std::int64_t trial) {
        RngStream rng(options.seed, static_cast<std::uint64_t>(trial));
        out[static_cast<std::size_t>(trial)] = simulate_trial(config, scheme, sample_times, rng);
    });
    return out;
}

void write_ensemble_csv(std::ostream& out, const EnsembleStats& stats, const std::string& source) {
    out << "time,stage,mean,variance,stderr,trials,source\n";
    for (std::size_t t = 0; t < stats.times.size(); ++t) {
        for (std::size_t k = 0; k < static_cast<std::size_t>(stats.num_stages); ++k) {
            fmt::print(out, "{},{},{},{},{},{},{}\n", stats.times[t], k + 1, stats.mean[t][k], stats.variance[t][k],
                       stats.standard_error(t, k), stats.trials, source);
        }
    }
}

}  // namespace tqflow
