// Command-line front end: simulate, closure, stationary, oracle, compare,
// list-presets.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "tqflow/closure.hpp"
#include "tqflow/ctmc.hpp"
#include "tqflow/errors.hpp"
#include "tqflow/harness.hpp"
#include "tqflow/stationary.hpp"
#include "tqflow/transient.hpp"

namespace fs = std::filesystem;
using namespace tqflow;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPrecondition = 3;
constexpr int kExitNumerical = 4;

struct CommonOptions {
    std::string config;
    std::string preset;
    std::string preset_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> trials;
    std::optional<int> stages;
    std::optional<unsigned> workers;
    std::optional<double> horizon;
    std::string times;
    std::string scheme;
    std::string engines;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Scenario config file");
    cmd->add_option("--preset", o.preset, "Named preset (see list-presets)");
    cmd->add_option("--preset-dir", o.preset_dir, "Directory holding preset .ini files");
    cmd->add_option("--seed", o.seed, "Monte Carlo seed (u64)");
    cmd->add_option("--trials", o.trials, "Monte Carlo trial count");
    cmd->add_option("--stages", o.stages, "Override the number of stages");
    cmd->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
    cmd->add_option("--horizon", o.horizon, "Simulation horizon");
    cmd->add_option("--times", o.times, "Comma-separated sample times");
    cmd->add_option("--scheme", o.scheme,
                    "exact | fixed:<dt>. Piecewise input is right-continuous: at a breakpoint the new rate applies");
    cmd->add_option("--engines", o.engines, "Comma-separated engines: mc-exact,mc-fixed,ode-nb,ode-mf,stationary,oracle");
    cmd->add_option("--out", o.out, "Output directory (stdout when omitted, where supported)");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Scenario resolve(const CommonOptions& o) {
    if (!o.config.empty() && !o.preset.empty()) throw InvalidParameter("use either --config or --preset, not both");
    Scenario s;
    if (!o.config.empty()) {
        s = load_scenario(o.config);
    } else if (!o.preset.empty()) {
        s = load_preset(o.preset, o.preset_dir.empty() ? default_preset_dir() : fs::path(o.preset_dir));
    } else {
        throw InvalidParameter("a scenario is required: pass --config <file> or --preset <name>");
    }
    if (o.seed) s.seed = *o.seed;
    if (o.trials) s.trials = *o.trials;
    if (o.stages) s.num_stages = *o.stages;
    if (o.workers) s.workers = *o.workers;
    if (o.horizon) s.horizon = *o.horizon;
    if (!o.times.empty()) {
        s.sample_times.clear();
        for (const auto& t : split_list(o.times)) {
            try {
                s.sample_times.push_back(std::stod(t));
            } catch (const std::exception&) {
                throw InvalidParameter("--times: expected a number, got '" + t + "'");
            }
        }
    }
    if (!o.engines.empty()) s.engines = split_list(o.engines);
    if (!o.scheme.empty()) {
        const auto [engine, dt] = parse_scheme(o.scheme);
        if (engine == kEngineMcFixed) s.fixed_dt = dt;
        // The scheme picks which Monte Carlo engine runs.
        for (auto& e : s.engines) {
            if (e == kEngineMcExact || e == kEngineMcFixed) e = engine;
        }
        if (std::none_of(s.engines.begin(), s.engines.end(), [&](const std::string& e) { return e == engine; })) {
            s.engines.insert(s.engines.begin(), engine);
        }
    }
    s.validate();
    return s;
}

void emit(const std::string& out_dir, const std::string& file, const std::function<void(std::ostream&)>& body) {
    if (out_dir.empty()) {
        body(std::cout);
        return;
    }
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / file, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidParameter("cannot write " + (fs::path(out_dir) / file).string());
    body(out);
}

int cmd_simulate(const CommonOptions& o) {
    Scenario s = resolve(o);
    std::string engine = kEngineMcExact;
    for (const auto& e : s.engines) {
        if (e == kEngineMcExact || e == kEngineMcFixed) {
            engine = e;
            break;
        }
    }
    const auto config = s.model();
    if (engine == kEngineMcFixed && !fixed_step_recommended(config, s.fixed_dt)) {
        std::cerr << "warning: dt*(N+1)*c > 1; per-step multi-move effects are not negligible\n";
    }
    const auto profile = run_engine(s, engine);
    emit(o.out, engine + ".csv", [&](std::ostream& out) { write_profile_csv(out, profile); });
    std::cerr << engine << ": " << s.trials << " trials in " << profile.wall_seconds << " s\n";
    return 0;
}

int cmd_closure(const CommonOptions& o, bool mean_field) {
    Scenario s = resolve(o);
    const std::string engine = mean_field ? kEngineOdeMf : kEngineOdeNb;
    const auto profile = run_engine(s, engine);
    emit(o.out, engine + ".csv", [&](std::ostream& out) { write_profile_csv(out, profile); });
    std::cerr << engine << ": " << profile.wall_seconds << " s\n";
    return 0;
}

// Shortest round-trip form, matching the library's CSV writers.
std::string num(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

int cmd_stationary(const CommonOptions& o, double tail_eps) {
    Scenario s = resolve(o);
    const auto laws = product_stationary_pmf(s.model(), tail_eps);
    emit(o.out, "stationary_pmf.csv", [&](std::ostream& out) {
        out << "stage,j,pi\n";
        for (std::size_t k = 0; k < laws.size(); ++k) {
            for (std::size_t j = 0; j < laws[k].pmf.size(); ++j) out << k + 1 << ',' << j << ',' << num(laws[k].pmf[j]) << '\n';
        }
    });
    emit(o.out, "stationary_moments.csv", [&](std::ostream& out) {
        out << "stage,mean,variance\n";
        for (std::size_t k = 0; k < laws.size(); ++k) {
            out << k + 1 << ',' << num(stationary_moment(laws[k], 1)) << ',' << num(stationary_variance(laws[k])) << '\n';
        }
    });
    return 0;
}

int cmd_oracle(const CommonOptions& o, int cap) {
    Scenario s = resolve(o);
    if (cap > 0) s.oracle_cap = cap;
    const auto config = s.model();
    for (double t : s.sample_times) {
        const auto r = transient_oracle(config, s.oracle_cap, t, LatticeState::empty(config.num_stages()));
        if (r.leak > 1e-6) std::cerr << "warning: truncation leak " << r.leak << " at t=" << t << "\n";
    }
    const auto profile = run_engine(s, kEngineOracle);
    emit(o.out, "oracle.csv", [&](std::ostream& out) { write_profile_csv(out, profile); });
    return 0;
}

int cmd_compare(const CommonOptions& o) {
    Scenario s = resolve(o);
    const auto report = run_scenario(s);
    const fs::path out_dir = o.out.empty() ? fs::path("out") / s.name : fs::path(o.out);
    write_report(report, out_dir);
    for (const auto& p : report.profiles) std::cerr << p.source << ": " << p.wall_seconds << " s\n";
    for (const auto& row : report.summary) {
        if (row.metric == "rel_l1_mean") {
            std::cerr << "t=" << row.time << " rel_l1_mean " << row.engine_a << " vs " << row.engine_b << ": "
                      << row.value << "\n";
        }
    }
    int code = 0;
    for (const auto& f : report.failures) {
        std::cerr << "engine " << f.engine << " failed: " << f.message << "\n";
        code = std::max(code, f.exit_code);
    }
    std::cerr << "wrote " << out_dir.string() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Throttled multi-stage queue: Monte Carlo, moment closure and exact oracles"};
    app.require_subcommand(1);

    CommonOptions sim_o, clo_o, sta_o, ora_o, cmp_o;
    bool mean_field = false;
    double tail_eps = 1e-12;
    int cap = 0;
    std::string list_dir;

    auto* sim = app.add_subcommand("simulate", "Monte Carlo ensemble of the Markov chain");
    add_common(sim, sim_o);
    auto* clo = app.add_subcommand("closure", "Integrate the negative-binomial moment closure");
    add_common(clo, clo_o);
    clo->add_flag("--mean-field", mean_field, "Integrate the naive mean-field baseline instead");
    auto* sta = app.add_subcommand("stationary", "Per-stage stationary pmfs and moments");
    add_common(sta, sta_o);
    sta->add_option("--tail-eps", tail_eps, "Truncation tail mass");
    auto* ora = app.add_subcommand("oracle", "Exact transient moments on a truncated state space (N <= 3)");
    add_common(ora, ora_o);
    ora->add_option("--cap", cap, "Per-stage truncation cap");
    auto* cmp = app.add_subcommand("compare", "Run several engines and compare them");
    add_common(cmp, cmp_o);
    auto* lst = app.add_subcommand("list-presets", "List bundled scenario presets");
    lst->add_option("--preset-dir", list_dir, "Directory holding preset .ini files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*sim) return cmd_simulate(sim_o);
        if (*clo) return cmd_closure(clo_o, mean_field);
        if (*sta) return cmd_stationary(sta_o, tail_eps);
        if (*ora) return cmd_oracle(ora_o, cap);
        if (*cmp) return cmd_compare(cmp_o);
        if (*lst) {
            for (const auto& name : list_presets(list_dir.empty() ? default_preset_dir() : fs::path(list_dir))) {
                std::cout << name << "\n";
            }
            return 0;
        }
    } catch (const InvalidParameter& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const PreconditionError& e) {
        std::cerr << "precondition failed: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
