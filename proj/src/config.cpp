#include "kinlevy/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "kinlevy/rng.hpp"

namespace kinlevy::cli {

namespace {

std::string join(const std::vector<std::string>& items)
{
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
    return out;
}

// Defaults reproduce the d = 1 harmonic benchmark at acceptance scale.
const char* kDefaults = R"json({
  "seed": 7,
  "threads": 1,
  "noise": {"alpha": 1.5, "dim": 1, "delta": 0.1},
  "drift": {"name": "harmonic_damped", "params": {}},
  "domain": {"kind": "interval", "lo": [-1.0], "hi": [1.0], "center": [0.0], "radius": 1.0},
  "grid": {"x_cells": 20, "v_cells": 20, "vmax": 5.0},
  "sample": {
    "t": 1.0, "paths": 100000,
    "alphas": [0.8, 1.2, 1.5, 1.9], "xi": [0.5, 1.0, 2.0],
    "decomposition_delta": 0.1, "ks_level": 0.01
  },
  "simulate": {
    "x0": [0.0], "v0": [0.0], "horizon": 1.0, "step": 0.01, "paths": 4,
    "noise": "exact", "delta": 0.1
  },
  "survival": {
    "starts": [[-0.5, 0.0], [0.5, 1.0]],
    "t_grid": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0],
    "fit_window": [2.0, 6.0], "paths": 100000, "step": 0.01
  },
  "escape": {
    "x_points": [-0.5, 0.0, 0.5], "v_points": [-1.0, 0.0, 1.0],
    "t": 0.2, "R": [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
    "paths": 10000, "step": 0.01, "C": -1.0
  },
  "lyapunov": {
    "a": 1.0, "b": 0.1, "p": 0.5,
    "radii": [1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0], "samples_per_shell": 32,
    "generator_alphas": [0.8, 1.2, 1.5, 1.9], "generator_xi": [0.5, 1.0, 2.0],
    "generator_v": [0.0, 0.7], "generator_tol": 1e-4,
    "supermartingale": {
      "x0": [0.5], "v0": [0.0], "t": 1.0, "paths": 10000, "step": 0.01,
      "levels": [0.5, 1.0, 1.5, 3.0, 10.0, 1000000.0], "dp_box": 10.0, "dp_points": 11
    }
  },
  "reach": {
    "x0": [-0.5], "v0": [0.0], "xF": [0.5], "vF": [0.0], "epsilon": 0.1, "t": 0.3,
    "paths": 10000, "direct_paths": 1000000, "step": 0.001,
    "rho": 0.05, "beta": 0.0, "delta": 0.0
  },
  "qsd_fv": {
    "x0": [0.0], "v0": [0.0], "particles": 5000, "horizon": 50.0, "step": 0.01,
    "burn_in_fraction": 0.3, "snapshot_interval": 1.0,
    "eigen_s": 1.0, "eigen_tol": 0.05
  },
  "qsd_cond": {
    "x0": [0.0], "v0": [0.0], "t": 5.0, "paths": 250000,
    "step": 0.01,
    "forget_starts": [[-0.5, 0.0], [0.5, 1.0]], "forget_times": [1.0, 4.0], "forget_paths": 50000
  },
  "ulam": {
    "V": 8.0, "x_cells": 24, "v_cells": 24, "dt": 0.25, "samples_per_cell": 2000, "step": 0.01,
    "export_matrix": false
  },
  "duhamel": {
    "drift": {"name": "tanh_field", "params": {"amplitude": 0.2}},
    "x0": [0.2], "v0": [0.0], "t": 1.0, "paths": 100000, "zero_drift_paths": 10000,
    "step": 0.001, "s_points": 41, "fd_step": 0.01,
    "bump_center": [0.0, 0.0], "bump_rx": 1.0, "bump_rv": 2.0
  },
  "bench": {
    "lambda_rel_tol": 0.15, "qsd_tv_tol": 0.08, "escape_tol": 0.01, "min_survivors": 10000,
    "left_vec_tv_tol": 0.1, "expected_b_max": 0.25, "expected_binding": "b < m2 a / 2"
  }
})json";

bool compatible(const Json& def, const Json& val)
{
    if (def.is_number_integer()) return val.is_number_integer();
    if (def.is_number()) return val.is_number();
    if (def.is_boolean()) return val.is_boolean();
    if (def.is_string()) return val.is_string();
    if (def.is_array()) return val.is_array();
    if (def.is_object()) return val.is_object();
    return false;
}

const char* type_name(const Json& j)
{
    if (j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    if (j.is_boolean()) return "boolean";
    if (j.is_string()) return "string";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

// Arrays are typed by their default's first element (numbers or arrays of
// numbers); empty defaults accept any numbers.
void check_array(const Json& def, const Json& val, const std::string& path, std::vector<std::string>& problems)
{
    const bool nested = !def.empty() && def.front().is_array();
    for (std::size_t i = 0; i < val.size(); ++i) {
        const Json& e = val[i];
        const std::string where = path + "[" + std::to_string(i) + "]";
        if (nested) {
            if (!e.is_array()) {
                problems.push_back(where + ": expected an array of numbers");
                continue;
            }
            for (const auto& x : e) {
                if (!x.is_number()) problems.push_back(where + ": expected numbers");
            }
        } else if (!e.is_number()) {
            problems.push_back(where + ": expected a number");
        }
    }
}

void merge(const Json& def, const Json& user, Json& out, const std::string& path, std::vector<std::string>& problems)
{
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = it.key();
        const std::string where = path.empty() ? key : path + "." + key;
        if (!def.contains(key)) {
            problems.push_back(where + ": unknown key");
            continue;
        }
        const Json& d = def.at(key);
        const Json& v = it.value();
        if (!compatible(d, v)) {
            problems.push_back(where + ": expected " + std::string(type_name(d)) + ", got " + type_name(v));
            continue;
        }
        if (d.is_object() && key != "params") {
            merge(d, v, out[key], where, problems);
        } else {
            if (d.is_array()) check_array(d, v, where, problems);
            out[key] = v;
        }
    }
}

void check_values(const Json& c, std::vector<std::string>& problems)
{
    auto positive = [&](const char* section, const char* key) {
        if (!(c.at(section).at(key).get<double>() > 0)) problems.push_back(std::string(section) + "." + key + ": must be > 0");
    };
    if (c.at("threads").get<long long>() < 1) problems.push_back("threads: must be >= 1");
    const int dim = c.at("noise").at("dim").get<int>();
    if (dim < 1 || dim > 3) problems.push_back("noise.dim: must be 1, 2 or 3");
    const double alpha = c.at("noise").at("alpha").get<double>();
    if (!(alpha > 0 && alpha < 2)) problems.push_back("noise.alpha: must lie in (0, 2)");
    const std::string kind = c.at("domain").at("kind").get<std::string>();
    if (kind != "interval" && kind != "box" && kind != "ball") {
        problems.push_back("domain.kind: must be interval, box or ball");
    }
    const std::string mode = c.at("simulate").at("noise").get<std::string>();
    if (mode != "exact" && mode != "decomposed" && mode != "disabled") {
        problems.push_back("simulate.noise: must be exact, decomposed or disabled");
    }
    for (const char* s : {"sample", "survival", "escape", "reach", "qsd_cond", "duhamel"}) positive(s, "paths");
    positive("simulate", "step");
    positive("survival", "step");
    positive("escape", "step");
    positive("reach", "step");
    positive("qsd_fv", "step");
    positive("ulam", "step");
    positive("qsd_cond", "step");
    positive("ulam", "dt");
    for (const char* k : {"x_cells", "v_cells"}) {
        if (c.at("grid").at(k).get<long long>() < 1) problems.push_back(std::string("grid.") + k + ": must be >= 1");
    }
    const auto& w = c.at("survival").at("fit_window");
    if (w.size() != 2) problems.push_back("survival.fit_window: expected [t_lo, t_hi]");
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error("cli_runner", "schema", join(problems)), problems_(std::move(problems))
{
}

const Json& default_config()
{
    static const Json defaults = Json::parse(kDefaults);
    return defaults;
}

Json load_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cli_runner", "config_unreadable", "cannot open config file " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error("cli_runner", "config_parse", path + ": " + e.what());
    }
}

void apply_override(Json& user, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError({assignment + ": expected key=value"});
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(raw);
    } catch (const Json::parse_error&) {
        value = raw;
    }
    Json* node = &user;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].empty()) throw ConfigError({key + ": empty path component"});
        if (i + 1 == parts.size()) {
            (*node)[parts[i]] = value;
        } else {
            if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = Json::object();
            node = &(*node)[parts[i]];
        }
    }
}

Json materialize(const Json& user)
{
    if (!user.is_object()) throw ConfigError({"<root>: config must be a JSON object"});
    Json out = default_config();
    std::vector<std::string> problems;
    merge(default_config(), user, out, "", problems);
    if (problems.empty()) check_values(out, problems);
    if (!problems.empty()) throw ConfigError(problems);
    return out;
}

std::string config_hash(const Json& config)
{
    Json c = config;
    c.erase("threads");
    const std::uint64_t h = hash_tag(c.dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

StableNoiseSpec noise_from(const Json& config)
{
    const auto& n = config.at("noise");
    return StableNoiseSpec(n.at("alpha").get<double>(), n.at("dim").get<int>(), n.at("delta").get<double>());
}

DriftModel drift_from(const Json& drift_section, int dim)
{
    ParamMap params;
    for (auto it = drift_section.at("params").begin(); it != drift_section.at("params").end(); ++it) {
        if (!it.value().is_number()) {
            throw ConfigError({"drift.params." + it.key() + ": expected a number"});
        }
        params[it.key()] = it.value().get<double>();
    }
    return builtin_drift(drift_section.at("name").get<std::string>(), params, dim);
}

Vec vec_from(const Json& array)
{
    if (!array.is_array() || array.empty() || array.size() > static_cast<std::size_t>(kMaxDim)) {
        throw ConfigError({"vector of length 1.." + std::to_string(kMaxDim) + " expected, got " + array.dump()});
    }
    Vec v(static_cast<int>(array.size()));
    for (std::size_t i = 0; i < array.size(); ++i) v[static_cast<int>(i)] = array[i].get<double>();
    return v;
}

State state_from(const Json& x, const Json& v) { return State{vec_from(x), vec_from(v)}; }

std::vector<State> states_from(const Json& list, int dim)
{
    std::vector<State> out;
    for (const auto& e : list) {
        if (e.size() != static_cast<std::size_t>(2 * dim)) {
            throw ConfigError({"start " + e.dump() + ": expected " + std::to_string(2 * dim) + " numbers"});
        }
        State s{Vec(dim), Vec(dim)};
        for (int i = 0; i < dim; ++i) {
            s.x[i] = e[static_cast<std::size_t>(i)].get<double>();
            s.v[i] = e[static_cast<std::size_t>(dim + i)].get<double>();
        }
        out.push_back(s);
    }
    return out;
}

Domain domain_from(const Json& config)
{
    const auto& d = config.at("domain");
    const std::string kind = d.at("kind").get<std::string>();
    const int dim = config.at("noise").at("dim").get<int>();
    Domain dom = kind == "ball"       ? Domain::ball(vec_from(d.at("center")), d.at("radius").get<double>())
                 : kind == "interval" ? Domain::interval(d.at("lo").at(0).get<double>(), d.at("hi").at(0).get<double>())
                                      : Domain::box(vec_from(d.at("lo")), vec_from(d.at("hi")));
    if (dom.dim() != dim) throw ConfigError({"domain: dimension differs from noise.dim"});
    return dom;
}

PhaseGrid grid_from(const Json& config)
{
    const Domain dom = domain_from(config);
    const auto& g = config.at("grid");
    return PhaseGrid::over(dom.bbox_lo(), dom.bbox_hi(), g.at("vmax").get<double>(), g.at("x_cells").get<int>(),
                           g.at("v_cells").get<int>());
}

}  // namespace kinlevy::cli
