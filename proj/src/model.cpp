#include "tqflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tqflow/errors.hpp"
#include "tqflow/rng.hpp"

namespace tqflow {

namespace {

void check_threshold(int sigma_star) {
    if (sigma_star < 1) {
        throw InvalidParameter("throttling threshold must be >= 1, got " + std::to_string(sigma_star));
    }
}

// Index of the breakpoint interval containing t (right-continuous).
std::size_t interval_index(const PiecewiseInput& p, double t) {
    const auto it = std::upper_bound(p.breakpoints.begin(), p.breakpoints.end(), t,
                                     [](double v, const Breakpoint& b) { return v < b.time; });
    if (it == p.breakpoints.begin()) return 0;
    return static_cast<std::size_t>(it - p.breakpoints.begin()) - 1;
}

}  // namespace

double throttle(std::int64_t x, int sigma_star) {
    check_threshold(sigma_star);
    if (x <= 0) return 0.0;
    if (x >= sigma_star) return 1.0;
    return static_cast<double>(x) / sigma_star;
}

double throttle(double x, int sigma_star) {
    check_threshold(sigma_star);
    if (x <= 0.0) return 0.0;
    if (x >= sigma_star) return 1.0;
    return x / sigma_star;
}

double transfer_rate(std::int64_t x, int sigma_star, double max_rate) {
    return max_rate * throttle(x, sigma_star);
}

void validate(const InputSchedule& schedule) {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConstantInput>) {
                if (!(s.value >= 0.0) || !std::isfinite(s.value)) {
                    throw InvalidParameter("constant input rate must be finite and >= 0");
                }
            } else if constexpr (std::is_same_v<T, PiecewiseInput>) {
                if (s.breakpoints.empty()) throw InvalidParameter("piecewise input needs at least one breakpoint");
                for (std::size_t i = 0; i < s.breakpoints.size(); ++i) {
                    if (!(s.breakpoints[i].value >= 0.0) || !std::isfinite(s.breakpoints[i].value)) {
                        throw InvalidParameter("piecewise input values must be finite and >= 0");
                    }
                    if (i > 0 && !(s.breakpoints[i].time > s.breakpoints[i - 1].time)) {
                        throw InvalidParameter("piecewise input breakpoints must be strictly increasing");
                    }
                }
            } else {
                if (!std::isfinite(s.offset) || !std::isfinite(s.amplitude) || !std::isfinite(s.omega)) {
                    throw InvalidParameter("sinusoid input parameters must be finite");
                }
            }
        },
        schedule);
}

double input_rate_at(const InputSchedule& schedule, double t) {
    return std::visit(
        [t](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConstantInput>) {
                return s.value;
            } else if constexpr (std::is_same_v<T, PiecewiseInput>) {
                return s.breakpoints[interval_index(s, t)].value;
            } else {
                return std::max(0.0, s.offset + s.amplitude * std::sin(s.omega * t));
            }
        },
        schedule);
}

double input_rate_bound(const InputSchedule& schedule, double from, double to) {
    return std::visit(
        [from, to](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ConstantInput>) {
                return s.value;
            } else if constexpr (std::is_same_v<T, PiecewiseInput>) {
                double best = 0.0;
                for (std::size_t i = interval_index(s, from); i < s.breakpoints.size(); ++i) {
                    if (i > interval_index(s, from) && s.breakpoints[i].time > to) break;
                    best = std::max(best, s.breakpoints[i].value);
                }
                return best;
            } else {
                // Global bound; valid on every interval.
                return std::max(0.0, s.offset + std::abs(s.amplitude));
            }
        },
        schedule);
}

std::optional<double> next_input_change(const InputSchedule& schedule, double t) {
    const auto* p = std::get_if<PiecewiseInput>(&schedule);
    if (p == nullptr) return std::nullopt;
    for (const auto& b : p->breakpoints) {
        if (b.time > t) return b.time;
    }
    return std::nullopt;
}

std::vector<double> input_breakpoints(const InputSchedule& schedule, double from, double to) {
    std::vector<double> out;
    if (const auto* p = std::get_if<PiecewiseInput>(&schedule)) {
        for (const auto& b : p->breakpoints) {
            if (b.time > from && b.time < to) out.push_back(b.time);
        }
    }
    return out;
}

bool is_time_invariant(const InputSchedule& schedule) {
    if (std::holds_alternative<ConstantInput>(schedule)) return true;
    if (const auto* p = std::get_if<PiecewiseInput>(&schedule)) {
        return std::all_of(p->breakpoints.begin(), p->breakpoints.end(),
                           [&](const Breakpoint& b) { return b.value == p->breakpoints.front().value; });
    }
    const auto& s = std::get<SinusoidInput>(schedule);
    return s.amplitude == 0.0 || s.omega == 0.0;
}

std::vector<int> materialize_thresholds(const ThresholdSpec& spec, int num_stages) {
    if (num_stages < 1) throw InvalidParameter("number of stages must be >= 1");
    const auto n = static_cast<std::size_t>(num_stages);
    return std::visit(
        [n](const auto& s) -> std::vector<int> {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, UniformThreshold>) {
                return std::vector<int>(n, s.value);
            } else if constexpr (std::is_same_v<T, PerStageThreshold>) {
                if (s.values.size() != n) {
                    throw InvalidParameter("per-stage threshold list has " + std::to_string(s.values.size()) +
                                           " entries, expected " + std::to_string(n));
                }
                return s.values;
            } else {
                if (s.support.empty() || s.support.size() != s.probabilities.size()) {
                    throw InvalidParameter("random threshold support and probabilities must be non-empty and equal length");
                }
                if (std::any_of(s.probabilities.begin(), s.probabilities.end(), [](double p) { return !(p >= 0.0); })) {
                    throw InvalidParameter("random threshold probabilities must be non-negative");
                }
                const double total = std::accumulate(s.probabilities.begin(), s.probabilities.end(), 0.0);
                if (std::abs(total - 1.0) > 1e-12) {
                    throw InvalidParameter("random threshold probabilities must sum to 1");
                }
                // Stream 0 of the seed; one uniform per stage, inverse CDF.
                RngStream rng(s.seed, 0);
                std::vector<int> out(n);
                for (auto& value : out) {
                    const double u = rng.uniform();
                    double cumulative = 0.0;
                    value = s.support.back();
                    for (std::size_t j = 0; j < s.support.size(); ++j) {
                        cumulative += s.probabilities[j];
                        if (u < cumulative) {
                            value = s.support[j];
                            break;
                        }
                    }
                }
                return out;
            }
        },
        spec);
}

ModelConfig::ModelConfig(int num_stages, double max_rate, InputSchedule input, std::vector<int> thresholds)
    : max_rate_(max_rate), input_(std::move(input)), thresholds_(std::move(thresholds)) {
    if (num_stages < 1) throw InvalidParameter("number of stages must be >= 1");
    if (static_cast<std::size_t>(num_stages) != thresholds_.size()) {
        throw InvalidParameter("threshold list length does not match the number of stages");
    }
    if (!(max_rate_ > 0.0) || !std::isfinite(max_rate_)) throw InvalidParameter("max rate must be finite and > 0");
    for (int s : thresholds_) check_threshold(s);
    validate(input_);
}

ModelConfig::ModelConfig(int num_stages, double max_rate, InputSchedule input, const ThresholdSpec& thresholds)
    : ModelConfig(num_stages, max_rate, std::move(input), materialize_thresholds(thresholds, num_stages)) {}

double ModelConfig::stage_rate(int stage, std::int64_t count) const {
    const int s = threshold(stage);
    if (count <= 0) return 0.0;
    if (count >= s) return max_rate_;
    return max_rate_ * static_cast<double>(count) / s;
}

}  // namespace tqflow
