#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tqflow/closure.hpp"
#include "tqflow/ctmc.hpp"
#include "tqflow/model.hpp"

namespace tqflow {

/// Engine tags, also used as the `source` column in CSV output.
inline constexpr const char* kEngineMcExact = "mc-exact";
inline constexpr const char* kEngineMcFixed = "mc-fixed";
inline constexpr const char* kEngineOdeNb = "ode-nb";
inline constexpr const char* kEngineOdeMf = "ode-mf";
inline constexpr const char* kEngineStationary = "stationary";
inline constexpr const char* kEngineOracle = "oracle";

bool is_known_engine(const std::string& tag);

/// Everything needed to run one experiment.
struct Scenario {
    std::string name = "scenario";
    int num_stages = 100;
    double max_rate = 10.0;
    InputSchedule input = ConstantInput{0.0};
    ThresholdSpec thresholds = UniformThreshold{3};

    double fixed_dt = 1e-3;  ///< step of the mc-fixed engine
    std::int64_t trials = 10000;
    std::uint64_t seed = 1;
    unsigned workers = 0;

    double horizon = 50.0;
    std::vector<double> sample_times = {10.0, 20.0, 50.0};
    std::vector<std::string> engines = {kEngineMcExact, kEngineOdeNb};
    IntegratorSettings ode;
    double front_threshold = 0.5;
    int oracle_cap = 30;

    /// Throws InvalidParameter on an inconsistent scenario.
    void validate() const;
    ModelConfig model() const;
};

/// Per-(time, stage) moments from one engine.
struct EngineProfile {
    std::string source;
    std::vector<double> times;
    int num_stages = 0;
    std::int64_t trials = 0;  ///< 0 for deterministic engines
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> variance;
    std::vector<std::vector<double>> stderr_mean;
    double wall_seconds = 0.0;
};

EngineProfile profile_from_ensemble(const EnsembleStats& stats, const std::string& source);
EngineProfile profile_from_moments(const MomentTrajectory& trajectory, const std::string& source);
EngineProfile profile_from_means(std::span<const double> times, const MeanFieldTrajectory& trajectory,
                                 const std::string& source);

/// Runs a single engine of the scenario.
EngineProfile run_engine(const Scenario& scenario, const std::string& engine);

/// CSV `time,stage,mean,variance,stderr,trials,source`.
void write_profile_csv(std::ostream& out, const EngineProfile& profile);

/// Largest 1-based stage whose mean is at least `threshold`; 0 if none.
int front_position(std::span<const double> profile, double threshold);

struct ProfileErrors {
    double l1_mean = 0.0;
    double linf_mean = 0.0;
    double rel_l1_mean = 0.0;  ///< l1_mean / sum of reference means
    double l1_variance = 0.0;
    double linf_variance = 0.0;
    double rel_l1_variance = 0.0;
};

/// Errors of `other` against `reference` over their common stages.
ProfileErrors compare_profiles(std::span<const double> reference_mean, std::span<const double> reference_variance,
                               std::span<const double> other_mean, std::span<const double> other_variance);

struct SummaryRow {
    double time;
    std::string metric;
    std::string engine_a;
    std::string engine_b;
    double value;
};

struct JoinedRow {
    double time;
    int stage;
    std::string engine_a;
    std::string engine_b;
    double mean_a, variance_a, stderr_a;
    double mean_b, variance_b, stderr_b;
};

struct EngineFailure {
    std::string engine;
    std::string message;
    int exit_code;  ///< 2 config, 3 precondition, 4 numerical
};

struct ComparisonReport {
    std::string scenario;
    std::vector<EngineProfile> profiles;
    std::vector<EngineFailure> failures;
    std::vector<SummaryRow> summary;
    std::vector<JoinedRow> joined;

    const EngineProfile* find(const std::string& source) const;
    /// Summary value for (time, metric, a, b); NaN if absent.
    double metric(double time, const std::string& metric, const std::string& a, const std::string& b = "") const;
};

/// Joins every pair of successful engines on (time, stage) and computes
/// error metrics and front positions. Profiles are reordered so the more
/// exact engine (oracle, stationary, mc-*, ode-*) is always engine_a.
ComparisonReport build_report(const std::string& scenario_name, std::vector<EngineProfile> profiles,
                              double front_threshold);

/// Runs each selected engine; an engine that fails is recorded and skipped.
ComparisonReport run_scenario(const Scenario& scenario);

/// Writes `<engine>.csv`, `summary.csv`, `joined.csv` and the plot data.
void write_report(const ComparisonReport& report, const std::filesystem::path& out_dir);

/// One `profile_t<time>.csv` per sample time plus `long.csv`
/// (`time,stage,source,mean,variance,stderr`). Returns the files written.
std::vector<std::filesystem::path> emit_plot_data(const ComparisonReport& report,
                                                  const std::filesystem::path& out_dir);

// Config files -----------------------------------------------------------

/// INI-style file with sections [model] [input] [thresholds] [sim] [ode] [run].
Scenario load_scenario(const std::filesystem::path& file);
Scenario parse_scenario(std::istream& in, const std::string& name = "scenario");

std::filesystem::path default_preset_dir();
std::vector<std::string> list_presets(const std::filesystem::path& dir = default_preset_dir());
Scenario load_preset(const std::string& name, const std::filesystem::path& dir = default_preset_dir());

/// Parses "exact" or "fixed:<dt>" into an engine tag and step.
std::pair<std::string, double> parse_scheme(const std::string& text);

}  // namespace tqflow
