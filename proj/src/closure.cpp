#include "tqflow/closure.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "tqflow/errors.hpp"
#include "tqflow/nb.hpp"

namespace tqflow {

namespace {

// y = [rho_1..rho_N, eta_1..eta_N].
void closure_rhs_flat(const ModelConfig& config, double t, const std::vector<double>& y, std::vector<double>& dy) {
    const auto n = static_cast<std::size_t>(config.num_stages());
    const double c = config.max_rate();
    const double c0 = config.input_rate(t);
    dy.resize(2 * n);
    // Inflow terms into stage k come from stage k-1's deficit.
    double upstream_outflow_deficit = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const int s = config.threshold(static_cast<int>(k));
        const auto sums = deficit_sums(y[k], y[n + k], s);
        const double scaled_deficit = c / s * sums.deficit;
        const double scaled_weighted = c / s * sums.weighted;
        if (k == 0) {
            dy[k] = c0 - c + scaled_deficit;
            dy[n + k] = c0 + c - scaled_weighted;
        } else {
            dy[k] = scaled_deficit - upstream_outflow_deficit;
            dy[n + k] = 2.0 * c - upstream_outflow_deficit - scaled_weighted;
        }
        upstream_outflow_deficit = scaled_deficit;
    }
}

void project_flat(std::vector<double>& y) {
    const std::size_t n = y.size() / 2;
    for (std::size_t k = 0; k < n; ++k) project_pair(y[k], y[n + k]);
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

bool MomentState::in_domain() const {
    if (rho.size() != eta.size()) return false;
    for (std::size_t k = 0; k < rho.size(); ++k) {
        if (!(rho[k] >= 0.0) || !(eta[k] >= rho[k])) return false;
    }
    return true;
}

MomentDerivative closure_rhs(const MomentState& state, const ModelConfig& config, double t) {
    const auto n = static_cast<std::size_t>(config.num_stages());
    if (state.rho.size() != n || state.eta.size() != n) {
        throw InvalidParameter("moment state size does not match the number of stages");
    }
    std::vector<double> y(state.rho);
    y.insert(y.end(), state.eta.begin(), state.eta.end());
    std::vector<double> dy;
    closure_rhs_flat(config, t, y, dy);
    return MomentDerivative{std::vector<double>(dy.begin(), dy.begin() + static_cast<std::ptrdiff_t>(n)),
                            std::vector<double>(dy.begin() + static_cast<std::ptrdiff_t>(n), dy.end())};
}

void project_pair(double& rho, double& eta) {
    if (rho >= 0.0 && eta >= rho) return;
    if (rho < 0.0 && eta >= 0.0) {
        rho = 0.0;
        return;
    }
    if (rho > eta && rho + eta >= 0.0) {
        const double mid = 0.5 * (rho + eta);
        rho = mid;
        eta = mid;
        return;
    }
    rho = 0.0;
    eta = 0.0;
}

MomentState project_D(MomentState state) {
    for (std::size_t k = 0; k < state.rho.size(); ++k) project_pair(state.rho[k], state.eta[k]);
    return state;
}

std::vector<double> mean_field_rhs(std::span<const double> rho, const ModelConfig& config, double t) {
    const auto n = static_cast<std::size_t>(config.num_stages());
    const double c = config.max_rate();
    std::vector<double> d(n);
    double inflow = config.input_rate(t);
    for (std::size_t k = 0; k < n; ++k) {
        const double outflow = c * throttle(rho[k], config.threshold(static_cast<int>(k)));
        d[k] = inflow - outflow;
        inflow = outflow;
    }
    return d;
}

void IntegratorSettings::validate() const {
    if (!(atol > 0.0) || !(rtol > 0.0)) throw InvalidParameter("integrator tolerances must be > 0");
    if (!(min_step > 0.0) || !(max_step >= min_step)) throw InvalidParameter("integrator needs 0 < min_step <= max_step");
    if (!(initial_step > 0.0)) throw InvalidParameter("initial step must be > 0");
}

AdaptiveEuler::AdaptiveEuler(Rhs rhs, Projection project, IntegratorSettings settings)
    : rhs_(std::move(rhs)), project_(std::move(project)), settings_(settings) {
    settings_.validate();
}

std::vector<std::vector<double>> AdaptiveEuler::run(std::vector<double> y, double t0, double horizon,
                                                    std::span<const double> sample_times,
                                                    std::vector<double> breakpoints) {
    for (std::size_t i = 0; i < sample_times.size(); ++i) {
        if (sample_times[i] < t0 || sample_times[i] > horizon) {
            throw InvalidParameter("sample times must lie within [start, horizon]");
        }
        if (i > 0 && sample_times[i] < sample_times[i - 1]) throw InvalidParameter("sample times must be sorted");
    }
    std::sort(breakpoints.begin(), breakpoints.end());
    std::erase_if(breakpoints, [&](double b) { return b <= t0 || b >= horizon; });
    breakpoints.push_back(horizon);

    const bool project = settings_.project;
    auto apply_projection = [&](std::vector<double>& v) {
        if (project) project_(v);
    };
    apply_projection(y);
    std::vector<std::vector<double>> out;
    out.reserve(sample_times.size());
    std::size_t next_sample = 0;
    while (next_sample < sample_times.size() && sample_times[next_sample] <= t0) out.push_back(y), ++next_sample;

    double t = t0;
    double h = std::min(settings_.initial_step, settings_.max_step);
    std::size_t next_break = 0;
    std::vector<double> dy, dy_half, y_full(y.size()), y_half(y.size()), y_two(y.size());
    while (next_sample < sample_times.size()) {
        while (breakpoints[next_break] <= t) ++next_break;
        const double stop = breakpoints[next_break];
        h = std::min(h, settings_.max_step);
        rhs_(t, y, dy);
        double err = 0.0;
        double scale = 0.0;
        bool lands_on_stop = false;
        for (;;) {
            lands_on_stop = h >= stop - t;
            const double step = lands_on_stop ? stop - t : h;
            for (std::size_t i = 0; i < y.size(); ++i) {
                y_full[i] = y[i] + step * dy[i];
                y_half[i] = y[i] + 0.5 * step * dy[i];
            }
            apply_projection(y_full);
            apply_projection(y_half);
            rhs_(t + 0.5 * step, y_half, dy_half);
            for (std::size_t i = 0; i < y.size(); ++i) y_two[i] = y_half[i] + 0.5 * step * dy_half[i];
            apply_projection(y_two);
            err = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y_two[i] - y_full[i]));
            scale = settings_.atol + settings_.rtol * std::max(max_abs(y), max_abs(y_two));
            if (err <= scale) break;
            ++stats_.rejected;
            h = step * std::max(0.1, 0.9 * std::sqrt(scale / err));
            if (h < settings_.min_step) {
                throw NumericalError(fmt::format("step size underflow at t={} (step {} below minimum {}, error {})", t,
                                                 h, settings_.min_step, err));
            }
        }
        ++stats_.accepted;
        const double t_new = lands_on_stop ? stop : t + h;
        while (next_sample < sample_times.size() && sample_times[next_sample] <= t_new) {
            const double w = (sample_times[next_sample] - t) / (t_new - t);
            std::vector<double> ys(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) ys[i] = y[i] + w * (y_two[i] - y[i]);
            apply_projection(ys);
            out.push_back(std::move(ys));
            ++next_sample;
        }
        std::swap(y, y_two);
        t = t_new;
        // A step clipped to a breakpoint says little about the next one.
        if (!lands_on_stop) {
            const double factor = err == 0.0 ? 4.0 : std::clamp(0.9 * std::sqrt(scale / err), 0.1, 4.0);
            h = std::max(h * factor, settings_.min_step);
        }
    }
    return out;
}

MomentTrajectory integrate(const MomentState& initial, const ModelConfig& config, double horizon,
                           std::span<const double> sample_times, const IntegratorSettings& settings) {
    const auto n = static_cast<std::size_t>(config.num_stages());
    if (initial.rho.size() != n || initial.eta.size() != n) {
        throw InvalidParameter("initial moment state size does not match the number of stages");
    }
    if (!initial.in_domain()) throw PreconditionError("initial moment state is outside 0 <= rho <= eta");
    std::vector<double> y(initial.rho);
    y.insert(y.end(), initial.eta.begin(), initial.eta.end());

    AdaptiveEuler solver([&config](double t, const std::vector<double>& s, std::vector<double>& d) {
                             closure_rhs_flat(config, t, s, d);
                         },
                         project_flat, settings);
    auto raw = solver.run(std::move(y), initial.time, horizon, sample_times,
                          input_breakpoints(config.input(), initial.time, horizon));

    MomentTrajectory out;
    out.stats = solver.stats();
    out.samples.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        MomentState s;
        s.rho.assign(raw[i].begin(), raw[i].begin() + static_cast<std::ptrdiff_t>(n));
        s.eta.assign(raw[i].begin() + static_cast<std::ptrdiff_t>(n), raw[i].end());
        s.time = sample_times[i];
        out.samples.push_back(std::move(s));
    }
    return out;
}

MeanFieldTrajectory integrate_mean_field(std::vector<double> initial, const ModelConfig& config, double horizon,
                                         std::span<const double> sample_times, const IntegratorSettings& settings) {
    if (initial.size() != static_cast<std::size_t>(config.num_stages())) {
        throw InvalidParameter("initial mean profile size does not match the number of stages");
    }
    AdaptiveEuler solver(
        [&config](double t, const std::vector<double>& s, std::vector<double>& d) { d = mean_field_rhs(s, config, t); },
        [](std::vector<double>& s) {
            for (double& x : s) x = std::max(x, 0.0);
        },
        settings);
    MeanFieldTrajectory out;
    out.samples = solver.run(std::move(initial), 0.0, horizon, sample_times,
                             input_breakpoints(config.input(), 0.0, horizon));
    out.stats = solver.stats();
    return out;
}

}  // namespace tqflow
