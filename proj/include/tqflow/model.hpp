#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace tqflow {

/// Piecewise-linear slowdown factor: 0 for x <= 0, x/sigma_star on the
/// throttled band, 1 once x >= sigma_star. Throws InvalidParameter if
/// sigma_star < 1.
double throttle(std::int64_t x, int sigma_star);

/// Same formula extended to real occupancies (used by the mean-field baseline).
double throttle(double x, int sigma_star);

/// c * throttle(x, sigma_star).
double transfer_rate(std::int64_t x, int sigma_star, double max_rate);

struct ConstantInput {
    double value = 0.0;
};

struct Breakpoint {
    double time = 0.0;
    double value = 0.0;
};

/// Right-continuous step function. The first breakpoint's value also
/// applies before its time.
struct PiecewiseInput {
    std::vector<Breakpoint> breakpoints;
};

/// offset + amplitude * sin(omega t), clamped at zero.
struct SinusoidInput {
    double offset = 0.0;
    double amplitude = 0.0;
    double omega = 1.0;
};

using InputSchedule = std::variant<ConstantInput, PiecewiseInput, SinusoidInput>;

void validate(const InputSchedule& schedule);

double input_rate_at(const InputSchedule& schedule, double t);

/// Supremum of the rate over [from, to].
double input_rate_bound(const InputSchedule& schedule, double from, double to);

/// First time strictly after t at which a piecewise schedule changes value.
std::optional<double> next_input_change(const InputSchedule& schedule, double t);

/// Breakpoints that fall strictly inside (from, to), sorted.
std::vector<double> input_breakpoints(const InputSchedule& schedule, double from, double to);

bool is_time_invariant(const InputSchedule& schedule);

struct UniformThreshold {
    int value = 1;
};

struct PerStageThreshold {
    std::vector<int> values;
};

/// Each stage draws its threshold i.i.d. from a finite distribution.
struct RandomThreshold {
    std::vector<int> support;
    std::vector<double> probabilities;
    std::uint64_t seed = 0;
};

using ThresholdSpec = std::variant<UniformThreshold, PerStageThreshold, RandomThreshold>;

/// Expand a threshold spec to one value per stage. Random specs are sampled
/// with the library's portable generator, so a fixed seed always yields the
/// same list.
std::vector<int> materialize_thresholds(const ThresholdSpec& spec, int num_stages);

/// A fully specified model instance. Immutable once built.
class ModelConfig {
public:
    ModelConfig(int num_stages, double max_rate, InputSchedule input, std::vector<int> thresholds);
    ModelConfig(int num_stages, double max_rate, InputSchedule input, const ThresholdSpec& thresholds);

    int num_stages() const { return static_cast<int>(thresholds_.size()); }
    double max_rate() const { return max_rate_; }
    const InputSchedule& input() const { return input_; }
    std::span<const int> thresholds() const { return thresholds_; }
    /// 0-based stage index.
    int threshold(int stage) const { return thresholds_[static_cast<std::size_t>(stage)]; }

    double input_rate(double t) const { return input_rate_at(input_, t); }

    /// Service rate of a 0-based stage holding `count` units.
    double stage_rate(int stage, std::int64_t count) const;

private:
    double max_rate_;
    InputSchedule input_;
    std::vector<int> thresholds_;
};

}  // namespace tqflow
