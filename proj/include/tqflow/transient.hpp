#pragma once

#include <cstdint>
#include <vector>

#include "tqflow/ctmc.hpp"
#include "tqflow/model.hpp"

namespace tqflow {

/// Generator of the chain restricted to {0..cap}^N. Inflow into a stage
/// already holding `cap` units is suppressed (reflecting), so rows still sum
/// to zero. States are indexed in mixed radix with stage 1 least significant.
class TruncatedGenerator {
public:
    struct Transition {
        std::uint32_t from;
        std::uint32_t to;
        double rate;
    };

    TruncatedGenerator(const ModelConfig& config, int cap, double input_rate);

    int cap() const { return cap_; }
    int num_stages() const { return num_stages_; }
    std::size_t size() const { return size_; }
    const std::vector<Transition>& transitions() const { return transitions_; }
    /// |q_aa| per state.
    const std::vector<double>& exit_rates() const { return exit_rates_; }

    std::size_t index_of(const std::vector<std::int64_t>& counts) const;
    std::vector<std::int64_t> counts_of(std::size_t index) const;

    /// y = x Q (row vector times generator).
    void apply_transpose(const std::vector<double>& x, std::vector<double>& y) const;

private:
    int cap_;
    int num_stages_;
    std::size_t size_;
    std::vector<Transition> transitions_;
    std::vector<double> exit_rates_;
};

struct TransientResult {
    int cap = 0;
    int num_stages = 0;
    double time = 0.0;
    std::vector<double> pmf;       ///< over the truncated joint space
    double leak = 0.0;             ///< mass on states with any stage within 2 of the cap
    std::vector<double> mean;      ///< per stage
    std::vector<double> variance;  ///< per stage

    /// Marginal pmf of a 0-based stage over 0..cap.
    std::vector<double> marginal(int stage) const;
};

/// Largest joint state space the oracle will build.
inline constexpr std::size_t kMaxOracleStates = 2'000'000;

/// Exact transient law on the truncated space, p(t) = p(0) exp(tQ), by
/// uniformization with a certified Poisson truncation error. Piecewise
/// constant input is handled segment by segment.
TransientResult transient_oracle(const ModelConfig& config, int cap, double t, const LatticeState& initial,
                                 double tolerance = 1e-10);

}  // namespace tqflow
