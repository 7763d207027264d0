#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinlevy/domain.hpp"
#include "kinlevy/drift_models.hpp"
#include "kinlevy/phase_grid.hpp"
#include "kinlevy/stable_noise.hpp"

namespace kinlevy::cli {

using Json = nlohmann::json;

/// Schema violation with one entry per offending field ("path: problem").
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// The full configuration tree with every default filled in. It doubles as
/// the schema: a user key is valid iff it exists here with a compatible type.
/// Objects named "params" are free-form (validated by the drift registry).
const Json& default_config();

/// Reads a JSON config file.
Json load_config_file(const std::string& path);

/// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a
/// plain string. Unknown paths are rejected when the config is materialized.
void apply_override(Json& user, const std::string& assignment);

/// Merges `user` onto the defaults after validation. Throws ConfigError.
Json materialize(const Json& user);

/// FNV-1a of the canonical dump of the config with "threads" removed, so
/// that runs differing only in worker count share a manifest hash.
std::string config_hash(const Json& config);

StableNoiseSpec noise_from(const Json& config);
DriftModel drift_from(const Json& drift_section, int dim);
Domain domain_from(const Json& config);
PhaseGrid grid_from(const Json& config);
Vec vec_from(const Json& array);
State state_from(const Json& x, const Json& v);
/// Starts given as [x_1..x_d, v_1..v_d] arrays.
std::vector<State> states_from(const Json& list, int dim);

}  // namespace kinlevy::cli
