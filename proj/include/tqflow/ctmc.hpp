#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tqflow/model.hpp"
#include "tqflow/rng.hpp"

namespace tqflow {

/// Chain configuration: one count per stage plus the current time.
struct LatticeState {
    std::vector<std::int64_t> counts;
    double time = 0.0;

    static LatticeState empty(int num_stages) {
        return LatticeState{std::vector<std::int64_t>(static_cast<std::size_t>(num_stages), 0), 0.0};
    }
    std::int64_t total() const;
};

/// Move channel i in [0, N]: 0 injects into stage 1, i moves a unit from
/// stage i to stage i+1, N removes a unit from the last stage. Stage
/// numbering in channel indices is 1-based; `counts` is 0-based.
/// Throws std::logic_error when moving out of an empty stage.
void apply_move(LatticeState& state, int channel);
LatticeState apply_move(const LatticeState& state, int channel);

/// Sum of all outflow rates of a state: |q_aa| of the generator.
double total_exit_rate(const LatticeState& state, const ModelConfig& config);

struct ExactSSA {};
struct FixedStep {
    double dt = 1e-3;
};
using SimScheme = std::variant<ExactSSA, FixedStep>;

std::string scheme_source_tag(const SimScheme& scheme);

/// Event-driven sampler. Keeps per-stage rates in a binary sum tree so each
/// event costs O(log N).
class ExactStepper {
public:
    ExactStepper(const ModelConfig& config, LatticeState state);

    /// Advance to the next event, or to `horizon` if none occurs before it.
    /// Returns the channel that fired.
    std::optional<int> step(RngStream& rng, double horizon);

    const LatticeState& state() const { return state_; }
    std::int64_t entered() const { return entered_; }
    std::int64_t exited() const { return exited_; }

private:
    void set_leaf(std::size_t stage);
    void fire(int channel);

    const ModelConfig* config_;
    LatticeState state_;
    std::size_t leaves_ = 1;
    std::vector<double> tree_;
    std::int64_t entered_ = 0;
    std::int64_t exited_ = 0;
};

struct StepResult {
    LatticeState state;
    std::optional<int> channel;
};

/// One exact (Gillespie) step with thinning for time-varying input.
StepResult step_exact(const LatticeState& state, const ModelConfig& config, RngStream& rng, double horizon);

/// One fixed-step update: each channel fires independently with probability
/// rate*dt, applied from the last stage down to the input. Throws
/// NumericalError if any rate*dt exceeds 1.
LatticeState step_fixed(const LatticeState& state, const ModelConfig& config, double dt, RngStream& rng);

/// True when dt*(N+1)*c <= 1.
bool fixed_step_recommended(const ModelConfig& config, double dt);

/// Counts of one trajectory at each sample time, starting from the empty lattice.
std::vector<std::vector<std::int64_t>> simulate_trial(const ModelConfig& config, const SimScheme& scheme,
                                                      std::span<const double> sample_times, RngStream& rng);

/// Per-(time, stage) sample moments. Indexing is [time][stage].
struct EnsembleStats {
    std::vector<double> times;
    int num_stages = 0;
    std::int64_t trials = 0;
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> variance;  // divisor M-1

    double standard_error(std::size_t time, std::size_t stage) const;
};

struct EnsembleOptions {
    std::int64_t trials = 1000;
    std::uint64_t seed = 0;
    /// 0 selects std::thread::hardware_concurrency().
    unsigned workers = 0;
};

/// Independent trials on streams (seed, trial index). Sums are accumulated
/// in exact integer arithmetic, so the result does not depend on the worker
/// count.
EnsembleStats run_ensemble(const ModelConfig& config, const SimScheme& scheme, double horizon,
                           std::span<const double> sample_times, const EnsembleOptions& options);

/// Raw per-trial samples, [trial][time][stage]. Intended for small N and M
/// (empirical pmfs, debugging dumps).
std::vector<std::vector<std::vector<std::int64_t>>> collect_trials(const ModelConfig& config,
                                                                   const SimScheme& scheme, double horizon,
                                                                   std::span<const double> sample_times,
                                                                   const EnsembleOptions& options);

/// CSV with header `time,stage,mean,variance,stderr,trials,source`, stages 1-based.
void write_ensemble_csv(std::ostream& out, const EnsembleStats& stats, const std::string& source);

}  // namespace tqflow
