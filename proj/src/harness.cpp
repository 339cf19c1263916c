#include "tqflow/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "tqflow/errors.hpp"
#include "tqflow/stationary.hpp"
#include "tqflow/transient.hpp"

namespace tqflow {

namespace {

bool is_mc(const std::string& engine) { return engine == kEngineMcExact || engine == kEngineMcFixed; }

// Lower rank = more trustworthy; the lower-ranked engine is the reference
// (engine_a) of every pairwise metric.
int reference_rank(const std::string& engine) {
    static const char* const order[] = {kEngineOracle, kEngineStationary, kEngineMcExact,
                                        kEngineMcFixed, kEngineOdeNb,      kEngineOdeMf};
    for (int i = 0; i < 6; ++i) {
        if (engine == order[i]) return i;
    }
    return 6;
}

std::ofstream open_for_write(const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidParameter("cannot write " + file.string());
    return out;
}

EngineProfile deterministic_profile(std::string source, std::span<const double> times, int num_stages) {
    EngineProfile p;
    p.source = std::move(source);
    p.times.assign(times.begin(), times.end());
    p.num_stages = num_stages;
    const auto n = static_cast<std::size_t>(num_stages);
    p.mean.assign(times.size(), std::vector<double>(n, 0.0));
    p.variance.assign(times.size(), std::vector<double>(n, 0.0));
    p.stderr_mean.assign(times.size(), std::vector<double>(n, 0.0));
    return p;
}

}  // namespace

bool is_known_engine(const std::string& tag) {
    return tag == kEngineMcExact || tag == kEngineMcFixed || tag == kEngineOdeNb || tag == kEngineOdeMf ||
           tag == kEngineStationary || tag == kEngineOracle;
}

void Scenario::validate() const {
    if (num_stages < 1) throw InvalidParameter("scenario needs at least one stage");
    if (engines.empty()) throw InvalidParameter("scenario selects no engines");
    for (const auto& e : engines) {
        if (!is_known_engine(e)) throw InvalidParameter("unknown engine '" + e + "'");
    }
    if (sample_times.empty()) throw InvalidParameter("scenario needs at least one sample time");
    if (!std::is_sorted(sample_times.begin(), sample_times.end())) {
        throw InvalidParameter("sample times must be sorted");
    }
    if (sample_times.front() < 0.0 || sample_times.back() > horizon) {
        throw InvalidParameter("sample times must lie within [0, horizon]");
    }
    if (trials < 2) throw InvalidParameter("trials must be >= 2");
    if (!(fixed_dt > 0.0)) throw InvalidParameter("fixed step must be > 0");
    if (!(front_threshold > 0.0)) throw InvalidParameter("front threshold must be > 0");
    ode.validate();
    model();
}

ModelConfig Scenario::model() const { return ModelConfig(num_stages, max_rate, input, thresholds); }

EngineProfile profile_from_ensemble(const EnsembleStats& stats, const std::string& source) {
    EngineProfile p;
    p.source = source;
    p.times = stats.times;
    p.num_stages = stats.num_stages;
    p.trials = stats.trials;
    p.mean = stats.mean;
    p.variance = stats.variance;
    p.stderr_mean.assign(stats.times.size(), std::vector<double>(static_cast<std::size_t>(stats.num_stages)));
    for (std::size_t t = 0; t < stats.times.size(); ++t) {
        for (std::size_t k = 0; k < static_cast<std::size_t>(stats.num_stages); ++k) {
            p.stderr_mean[t][k] = stats.standard_error(t, k);
        }
    }
    return p;
}

EngineProfile profile_from_moments(const MomentTrajectory& trajectory, const std::string& source) {
    std::vector<double> times;
    for (const auto& s : trajectory.samples) times.push_back(s.time);
    const int n = trajectory.samples.empty() ? 0 : static_cast<int>(trajectory.samples.front().rho.size());
    auto p = deterministic_profile(source, times, n);
    for (std::size_t t = 0; t < times.size(); ++t) {
        p.mean[t] = trajectory.samples[t].rho;
        p.variance[t] = trajectory.samples[t].eta;
    }
    return p;
}

EngineProfile profile_from_means(std::span<const double> times, const MeanFieldTrajectory& trajectory,
                                 const std::string& source) {
    const int n = trajectory.samples.empty() ? 0 : static_cast<int>(trajectory.samples.front().size());
    auto p = deterministic_profile(source, times, n);
    for (std::size_t t = 0; t < times.size(); ++t) p.mean[t] = trajectory.samples[t];
    // The mean-field baseline carries no variance; the column is NaN.
    for (auto& row : p.variance) std::fill(row.begin(), row.end(), std::numeric_limits<double>::quiet_NaN());
    return p;
}

EngineProfile run_engine(const Scenario& scenario, const std::string& engine) {
    const ModelConfig config = scenario.model();
    const auto start = std::chrono::steady_clock::now();
    EngineProfile profile;
    if (is_mc(engine)) {
        SimScheme scheme = engine == kEngineMcExact ? SimScheme{ExactSSA{}} : SimScheme{FixedStep{scenario.fixed_dt}};
        EnsembleOptions opts{scenario.trials, scenario.seed, scenario.workers};
        profile = profile_from_ensemble(run_ensemble(config, scheme, scenario.horizon, scenario.sample_times, opts),
                                        engine);
    } else if (engine == kEngineOdeNb) {
        profile = profile_from_moments(integrate(MomentState::zero(config.num_stages()), config, scenario.horizon,
                                                 scenario.sample_times, scenario.ode),
                                       engine);
    } else if (engine == kEngineOdeMf) {
        profile = profile_from_means(
            scenario.sample_times,
            integrate_mean_field(std::vector<double>(static_cast<std::size_t>(config.num_stages()), 0.0), config,
                                 scenario.horizon, scenario.sample_times, scenario.ode),
            engine);
    } else if (engine == kEngineStationary) {
        const auto laws = product_stationary_pmf(config);
        profile = deterministic_profile(engine, scenario.sample_times, config.num_stages());
        for (std::size_t t = 0; t < profile.times.size(); ++t) {
            for (std::size_t k = 0; k < laws.size(); ++k) {
                profile.mean[t][k] = stationary_moment(laws[k], 1);
                profile.variance[t][k] = stationary_variance(laws[k]);
            }
        }
    } else if (engine == kEngineOracle) {
        if (config.num_stages() > 3) throw PreconditionError("the transient oracle supports at most 3 stages");
        profile = deterministic_profile(engine, scenario.sample_times, config.num_stages());
        const auto empty = LatticeState::empty(config.num_stages());
        for (std::size_t t = 0; t < profile.times.size(); ++t) {
            const auto r = transient_oracle(config, scenario.oracle_cap, profile.times[t], empty);
            profile.mean[t] = r.mean;
            profile.variance[t] = r.variance;
        }
    } else {
        throw InvalidParameter("unknown engine '" + engine + "'");
    }
    profile.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return profile;
}

void write_profile_csv(std::ostream& out, const EngineProfile& profile) {
    out << "time,stage,mean,variance,stderr,trials,source\n";
    for (std::size_t t = 0; t < profile.times.size(); ++t) {
        for (std::size_t k = 0; k < static_cast<std::size_t>(profile.num_stages); ++k) {
            fmt::print(out, "{},{},{},{},{},{},{}\n", profile.times[t], k + 1, profile.mean[t][k],
                       profile.variance[t][k], profile.stderr_mean[t][k], profile.trials, profile.source);
        }
    }
}

int front_position(std::span<const double> profile, double threshold) {
    for (std::size_t k = profile.size(); k > 0; --k) {
        if (profile[k - 1] >= threshold) return static_cast<int>(k);
    }
    return 0;
}

ProfileErrors compare_profiles(std::span<const double> reference_mean, std::span<const double> reference_variance,
                               std::span<const double> other_mean, std::span<const double> other_variance) {
    ProfileErrors e;
    const std::size_t n = std::min(reference_mean.size(), other_mean.size());
    double mass = 0.0;
    double var_mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dm = std::abs(reference_mean[k] - other_mean[k]);
        e.l1_mean += dm;
        e.linf_mean = std::max(e.linf_mean, dm);
        mass += reference_mean[k];
        const double dv = std::abs(reference_variance[k] - other_variance[k]);
        e.l1_variance += dv;
        e.linf_variance = std::max(e.linf_variance, dv);
        var_mass += reference_variance[k];
        if (std::isnan(dv)) e.linf_variance = dv;
    }
    e.rel_l1_mean = mass > 0.0 ? e.l1_mean / mass : (e.l1_mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    e.rel_l1_variance =
        var_mass > 0.0 ? e.l1_variance / var_mass : (e.l1_variance == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    return e;
}

const EngineProfile* ComparisonReport::find(const std::string& source) const {
    for (const auto& p : profiles) {
        if (p.source == source) return &p;
    }
    return nullptr;
}

double ComparisonReport::metric(double time, const std::string& name, const std::string& a,
                                const std::string& b) const {
    for (const auto& row : summary) {
        if (row.time == time && row.metric == name && row.engine_a == a && row.engine_b == b) return row.value;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

ComparisonReport build_report(const std::string& scenario_name, std::vector<EngineProfile> profiles,
                              double front_threshold) {
    ComparisonReport report;
    report.scenario = scenario_name;
    report.profiles = std::move(profiles);
    std::stable_sort(report.profiles.begin(), report.profiles.end(),
                     [](const EngineProfile& a, const EngineProfile& b) {
                         return reference_rank(a.source) < reference_rank(b.source);
                     });

    for (const auto& p : report.profiles) {
        for (std::size_t t = 0; t < p.times.size(); ++t) {
            report.summary.push_back(
                {p.times[t], "front", p.source, "", static_cast<double>(front_position(p.mean[t], front_threshold))});
        }
    }
    for (std::size_t i = 0; i < report.profiles.size(); ++i) {
        for (std::size_t j = i + 1; j < report.profiles.size(); ++j) {
            const auto& a = report.profiles[i];
            const auto& b = report.profiles[j];
            const auto stages = static_cast<std::size_t>(std::min(a.num_stages, b.num_stages));
            for (std::size_t ta = 0; ta < a.times.size(); ++ta) {
                const auto it = std::find(b.times.begin(), b.times.end(), a.times[ta]);
                if (it == b.times.end()) continue;
                const auto tb = static_cast<std::size_t>(it - b.times.begin());
                const double time = a.times[ta];
                for (std::size_t k = 0; k < stages; ++k) {
                    report.joined.push_back({time, static_cast<int>(k + 1), a.source, b.source, a.mean[ta][k],
                                             a.variance[ta][k], a.stderr_mean[ta][k], b.mean[tb][k],
                                             b.variance[tb][k], b.stderr_mean[tb][k]});
                }
                const auto e = compare_profiles(std::span(a.mean[ta]).first(stages), std::span(a.variance[ta]).first(stages),
                                                std::span(b.mean[tb]).first(stages), std::span(b.variance[tb]).first(stages));
                const auto add = [&](const char* metric, double value) {
                    report.summary.push_back({time, metric, a.source, b.source, value});
                };
                add("l1_mean", e.l1_mean);
                add("linf_mean", e.linf_mean);
                add("rel_l1_mean", e.rel_l1_mean);
                add("l1_variance", e.l1_variance);
                add("linf_variance", e.linf_variance);
                add("rel_l1_variance", e.rel_l1_variance);
                add("front_gap", std::abs(front_position(std::span(a.mean[ta]).first(stages), front_threshold) -
                                          front_position(std::span(b.mean[tb]).first(stages), front_threshold)));
            }
        }
    }
    return report;
}

ComparisonReport run_scenario(const Scenario& scenario) {
    scenario.validate();
    std::vector<EngineProfile> profiles;
    std::vector<EngineFailure> failures;
    for (const auto& engine : scenario.engines) {
        try {
            profiles.push_back(run_engine(scenario, engine));
        } catch (const PreconditionError& e) {
            failures.push_back({engine, e.what(), 3});
        } catch (const NumericalError& e) {
            failures.push_back({engine, e.what(), 4});
        } catch (const InvalidParameter& e) {
            failures.push_back({engine, e.what(), 2});
        }
    }
    auto report = build_report(scenario.name, std::move(profiles), scenario.front_threshold);
    report.failures = std::move(failures);
    return report;
}

void write_report(const ComparisonReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    for (const auto& p : report.profiles) {
        auto out = open_for_write(out_dir / (p.source + ".csv"));
        write_profile_csv(out, p);
    }
    {
        auto out = open_for_write(out_dir / "summary.csv");
        out << "time,metric,engine_a,engine_b,value\n";
        for (const auto& row : report.summary) {
            fmt::print(out, "{},{},{},{},{}\n", row.time, row.metric, row.engine_a, row.engine_b, row.value);
        }
    }
    {
        auto out = open_for_write(out_dir / "joined.csv");
        out << "time,stage,engine_a,engine_b,mean_a,variance_a,stderr_a,mean_b,variance_b,stderr_b\n";
        for (const auto& r : report.joined) {
            fmt::print(out, "{},{},{},{},{},{},{},{},{},{}\n", r.time, r.stage, r.engine_a, r.engine_b, r.mean_a,
                       r.variance_a, r.stderr_a, r.mean_b, r.variance_b, r.stderr_b);
        }
    }
    emit_plot_data(report, out_dir);
}

std::vector<std::filesystem::path> emit_plot_data(const ComparisonReport& report,
                                                  const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<double> times;
    for (const auto& p : report.profiles) times.insert(times.end(), p.times.begin(), p.times.end());
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    std::vector<std::filesystem::path> written;
    auto row = [](std::ostream& out, double time, std::size_t k, const EngineProfile& p, std::size_t t) {
        fmt::print(out, "{},{},{},{},{},{}\n", time, k + 1, p.source, p.mean[t][k], p.variance[t][k],
                   p.stderr_mean[t][k]);
    };
    for (double time : times) {
        const auto file = out_dir / fmt::format("profile_t{}.csv", time);
        auto out = open_for_write(file);
        out << "time,stage,source,mean,variance,stderr\n";
        for (const auto& p : report.profiles) {
            const auto it = std::find(p.times.begin(), p.times.end(), time);
            if (it == p.times.end()) continue;
            const auto t = static_cast<std::size_t>(it - p.times.begin());
            for (std::size_t k = 0; k < static_cast<std::size_t>(p.num_stages); ++k) row(out, time, k, p, t);
        }
        written.push_back(file);
    }
    const auto file = out_dir / "long.csv";
    auto out = open_for_write(file);
    out << "time,stage,source,mean,variance,stderr\n";
    for (const auto& p : report.profiles) {
        for (std::size_t t = 0; t < p.times.size(); ++t) {
            for (std::size_t k = 0; k < static_cast<std::size_t>(p.num_stages); ++k) row(out, p.times[t], k, p, t);
        }
    }
    written.push_back(file);
    return written;
}

}  // namespace tqflow
