#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tqflow/errors.hpp"
#include "tqflow/harness.hpp"

namespace tqflow {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& text, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw InvalidParameter("config key '" + key + "': expected a number, got '" + text + "'");
    }
}

long long to_integer(const std::string& text, const std::string& key) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw InvalidParameter("config key '" + key + "': expected an integer, got '" + text + "'");
    }
    return v;
}

std::uint64_t to_unsigned(const std::string& text, const std::string& key) {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw InvalidParameter("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    std::optional<std::string> get(const std::string& key) const {
        if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'))) {
            // Trailing `; ...` or `# ...` comments.
            return trim(v->substr(0, v->find_first_of(";#")));
        }
        return std::nullopt;
    }
    std::string require(const std::string& key) const {
        if (auto v = get(key)) return *v;
        throw InvalidParameter("config is missing required key '" + key + "'");
    }
    double number(const std::string& key, double fallback) const {
        auto v = get(key);
        return v ? to_double(*v, key) : fallback;
    }
    long long integer(const std::string& key, long long fallback) const {
        auto v = get(key);
        return v ? to_integer(*v, key) : fallback;
    }
    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split(require(key), ',')) out.push_back(to_double(item, key));
        return out;
    }
    std::vector<int> integers(const std::string& key) const {
        std::vector<int> out;
        for (const auto& item : split(require(key), ',')) out.push_back(static_cast<int>(to_integer(item, key)));
        return out;
    }

private:
    const pt::ptree& tree_;
};

InputSchedule read_input(const Reader& r) {
    const std::string kind = r.get("input.kind").value_or("constant");
    if (kind == "constant") return ConstantInput{r.number("input.value", 0.0)};
    if (kind == "piecewise") {
        PiecewiseInput p;
        for (const auto& item : split(r.require("input.breakpoints"), ',')) {
            const auto parts = split(item, ':');
            if (parts.size() != 2) {
                throw InvalidParameter("config key 'input.breakpoints': expected time:value pairs, got '" + item + "'");
            }
            p.breakpoints.push_back({to_double(parts[0], "input.breakpoints"), to_double(parts[1], "input.breakpoints")});
        }
        return p;
    }
    if (kind == "sinusoid") {
        return SinusoidInput{r.number("input.offset", 0.0), r.number("input.amplitude", 0.0),
                             r.number("input.omega", 1.0)};
    }
    throw InvalidParameter("config key 'input.kind': unknown input kind '" + kind + "'");
}

ThresholdSpec read_thresholds(const Reader& r) {
    const std::string kind = r.get("thresholds.kind").value_or("uniform");
    if (kind == "uniform") return UniformThreshold{static_cast<int>(r.integer("thresholds.value", 1))};
    if (kind == "per_stage") return PerStageThreshold{r.integers("thresholds.values")};
    if (kind == "random") {
        RandomThreshold t;
        t.support = r.integers("thresholds.support");
        t.probabilities = r.numbers("thresholds.probabilities");
        t.seed = to_unsigned(r.get("thresholds.seed").value_or("0"), "thresholds.seed");
        return t;
    }
    throw InvalidParameter("config key 'thresholds.kind': unknown threshold kind '" + kind + "'");
}

}  // namespace

std::pair<std::string, double> parse_scheme(const std::string& text) {
    if (text == "exact") return {kEngineMcExact, 0.0};
    if (text.starts_with("fixed:")) {
        const double dt = to_double(text.substr(6), "scheme");
        if (!(dt > 0.0)) throw InvalidParameter("fixed scheme step must be > 0");
        return {kEngineMcFixed, dt};
    }
    if (text == "fixed") return {kEngineMcFixed, 1e-3};
    throw InvalidParameter("scheme must be 'exact' or 'fixed:<dt>', got '" + text + "'");
}

Scenario parse_scenario(std::istream& in, const std::string& name) {
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidParameter(std::string("malformed config: ") + e.what());
    }
    const Reader r(tree);
    Scenario s;
    s.name = r.get("run.name").value_or(name);
    s.num_stages = static_cast<int>(r.integer("model.stages", s.num_stages));
    s.max_rate = r.number("model.max_rate", s.max_rate);
    s.input = read_input(r);
    s.thresholds = read_thresholds(r);

    if (auto scheme = r.get("sim.scheme")) {
        const auto [engine, dt] = parse_scheme(*scheme);
        if (engine == kEngineMcFixed) s.fixed_dt = dt;
    }
    s.fixed_dt = r.number("sim.dt", s.fixed_dt);
    s.trials = r.integer("sim.trials", s.trials);
    s.seed = to_unsigned(r.get("sim.seed").value_or(std::to_string(s.seed)), "sim.seed");
    s.workers = static_cast<unsigned>(r.integer("sim.workers", 0));

    s.ode.atol = r.number("ode.atol", s.ode.atol);
    s.ode.rtol = r.number("ode.rtol", s.ode.rtol);
    s.ode.initial_step = r.number("ode.initial_step", s.ode.initial_step);
    s.ode.min_step = r.number("ode.min_step", s.ode.min_step);
    s.ode.max_step = r.number("ode.max_step", s.ode.max_step);

    s.horizon = r.number("run.horizon", s.horizon);
    if (r.get("run.times")) s.sample_times = r.numbers("run.times");
    if (auto engines = r.get("run.engines")) s.engines = split(*engines, ',');
    s.front_threshold = r.number("run.front_threshold", s.front_threshold);
    s.oracle_cap = static_cast<int>(r.integer("run.oracle_cap", s.oracle_cap));
    s.validate();
    return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw InvalidParameter("cannot open config file " + file.string());
    return parse_scenario(in, file.stem().string());
}

std::filesystem::path default_preset_dir() {
    if (const char* env = std::getenv("TQFLOW_PRESET_DIR")) return env;
    return TQFLOW_PRESET_DIR;
}

std::vector<std::string> list_presets(const std::filesystem::path& dir) {
    std::vector<std::string> names;
    if (!std::filesystem::is_directory(dir)) return names;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".ini") names.push_back(entry.path().stem().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

Scenario load_preset(const std::string& name, const std::filesystem::path& dir) {
    const auto file = dir / (name + ".ini");
    if (!std::filesystem::exists(file)) throw InvalidParameter("unknown preset '" + name + "'");
    return load_scenario(file);
}

}  // namespace tqflow
