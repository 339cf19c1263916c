#pragma once

#include <functional>
#include <span>
#include <vector>

#include "tqflow/model.hpp"

namespace tqflow {

/// Approximate per-stage means (rho) and variances (eta).
struct MomentState {
    std::vector<double> rho;
    std::vector<double> eta;
    double time = 0.0;

    static MomentState zero(int num_stages) {
        const auto n = static_cast<std::size_t>(num_stages);
        return MomentState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0};
    }
    bool in_domain() const;
};

struct MomentDerivative {
    std::vector<double> rho;
    std::vector<double> eta;
};

/// Closed mean/variance equations under the negative-binomial ansatz, with
/// per-stage thresholds. Throws PreconditionError if any stage is outside
/// 0 <= rho <= eta.
MomentDerivative closure_rhs(const MomentState& state, const ModelConfig& config, double t);

/// Nearest point of the wedge {0 <= rho <= eta}.
void project_pair(double& rho, double& eta);
MomentState project_D(MomentState state);

/// d rho_1 = c0 - c v(rho_1), d rho_k = c v(rho_{k-1}) - c v(rho_k).
std::vector<double> mean_field_rhs(std::span<const double> rho, const ModelConfig& config, double t);

struct IntegratorSettings {
    double initial_step = 1e-3;
    double min_step = 1e-12;
    double max_step = 0.5;
    double atol = 1e-8;
    double rtol = 1e-6;
    /// Project onto the domain after every accepted step.
    bool project = true;

    void validate() const;
};

struct IntegrationStats {
    long long accepted = 0;
    long long rejected = 0;
};

/// Explicit Euler with step-doubling error control. Steps stop exactly at
/// every breakpoint so discontinuities in the input are never straddled.
/// Samples are linear interpolants between accepted steps, passed through
/// `project`. Throws NumericalError when the step underflows min_step.
class AdaptiveEuler {
public:
    using Rhs = std::function<void(double t, const std::vector<double>& y, std::vector<double>& dy)>;
    using Projection = std::function<void(std::vector<double>& y)>;

    AdaptiveEuler(Rhs rhs, Projection project, IntegratorSettings settings);

    std::vector<std::vector<double>> run(std::vector<double> y0, double t0, double horizon,
                                         std::span<const double> sample_times, std::vector<double> breakpoints);

    const IntegrationStats& stats() const { return stats_; }

private:
    Rhs rhs_;
    Projection project_;
    IntegratorSettings settings_;
    IntegrationStats stats_;
};

struct MomentTrajectory {
    std::vector<MomentState> samples;
    IntegrationStats stats;
};

/// Integrates the closure from `initial` (at time initial.time) and returns
/// the state at each sample time. Every returned state lies in the domain.
MomentTrajectory integrate(const MomentState& initial, const ModelConfig& config, double horizon,
                           std::span<const double> sample_times, const IntegratorSettings& settings = {});

struct MeanFieldTrajectory {
    std::vector<std::vector<double>> samples;  ///< [time][stage]
    IntegrationStats stats;
};

MeanFieldTrajectory integrate_mean_field(std::vector<double> initial, const ModelConfig& config, double horizon,
                                         std::span<const double> sample_times,
                                         const IntegratorSettings& settings = {});

}  // namespace tqflow
