#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kinlevy/types.hpp"

namespace kinlevy {

enum class DriftClass { Bounded, LinearGrowth, PerturbedGradient };
enum class ThetaCase { B1, B2 };

const char* to_string(DriftClass c) noexcept;

using DriftFn = std::function<Vec(const Vec& x, const Vec& v)>;
using ParamMap = std::map<std::string, double>;

/// Constants of the perturbed-gradient class B = -grad U + Theta.
struct PGradParams {
    std::function<double(const Vec&)> U;
    std::function<Vec(const Vec&)> grad_U;
    DriftFn Theta;
    double m1 = 0, C1_U = 0, m2 = 0, C2_U = 0, q = 2;
    double Gamma = 0, C1_Theta = 0, ell1 = 1;
    ThetaCase theta_case = ThetaCase::B2;
    double C2_Theta = 0, ell2 = 1;
    /// Radii r for which the case-B1 local constant C_r is computed.
    std::vector<double> local_radii{1.0, 2.0, 5.0};
};

struct DriftModel {
    std::string name;
    int dim = 1;
    DriftClass class_tag = DriftClass::LinearGrowth;
    DriftFn eval;
    /// C with |B(x,v)| <= C (1 + |x| + |v|), when the model has linear growth.
    std::optional<double> growth_constant;
    /// sup |B| for bounded models.
    std::optional<double> bound;
    std::optional<PGradParams> pgrad;
    /// Distance from (x, v) to the declared discontinuity set; empty if none.
    std::function<double(const Vec&, const Vec&)> discontinuity_distance;

    Vec operator()(const Vec& x, const Vec& v) const { return eval(x, v); }
};

/// The zero drift in dimension d.
DriftModel zero_drift(int dim);

/// Named built-in model. Unknown parameter names are rejected; missing ones
/// take defaults. `dim` is the spatial dimension.
DriftModel builtin_drift(const std::string& name, const ParamMap& params = {}, int dim = 1);

/// Default parameters of a registered model (used to echo configs).
ParamMap drift_defaults(const std::string& name);
std::vector<std::string> drift_names();

/// Extension point: register a custom drift under `name`. The factory gets
/// the user parameters merged over `defaults`.
using DriftFactory = std::function<DriftModel(const ParamMap& params, int dim)>;
void register_drift(const std::string& name, ParamMap defaults, DriftFactory factory);

struct GridSpec {
    double R = 20.0;
    /// Points per axis; 0 picks 101 in d = 1 and 21 otherwise.
    int points_per_axis = 0;
    double tolerance = 1e-9;
    /// Grid points closer than this to a declared discontinuity are skipped.
    double discontinuity_gap = 1e-9;
};

struct InequalityCheck {
    std::string name;
    double margin = 0.0;  // min over grid of (rhs - lhs)
    State witness;
    bool passed = true;
};

struct AssumptionReport {
    std::vector<InequalityCheck> checks;
    /// Case-B1 local constants C_r per declared radius.
    std::vector<std::pair<double, double>> local_constants;
    std::size_t points_checked = 0;
    std::size_t points_skipped = 0;
    bool passed = true;

    const InequalityCheck* find(const std::string& name) const;
};

AssumptionReport check_assumptions(const DriftModel& model, const GridSpec& grid = {});

struct AbConstraint {
    std::string name;
    double b_bound = 0.0;  // b < b_bound
};

struct AbInterval {
    double b_max = 0.0;
    std::string binding;
    std::vector<AbConstraint> constraints;
    // Inputs, kept so the original inequalities can be re-evaluated.
    double a = 0, Gamma = 0, m1 = 0, m2 = 0, C2_Theta = 0, q = 2;
    ThetaCase theta_case = ThetaCase::B2;
    /// Re-checks every constraint at the given b by direct substitution.
    bool satisfied_at(double b) const;
};

/// Admissible interval (0, b_max) for the Lyapunov cross term. Throws
/// Error{code "infeasible_ab"} when some constraint leaves no positive b.
AbInterval admissible_ab(const PGradParams& pgrad, double a);

}  // namespace kinlevy
