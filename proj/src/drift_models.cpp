#include "kinlevy/drift_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

namespace kinlevy {

const char* to_string(DriftClass c) noexcept
{
    switch (c) {
        case DriftClass::Bounded: return "Bounded";
        case DriftClass::LinearGrowth: return "LinearGrowth";
        case DriftClass::PerturbedGradient: return "PerturbedGradient";
    }
    return "?";
}

namespace {

struct Entry {
    ParamMap defaults;
    DriftFactory factory;
};

double get(const ParamMap& p, const char* key) { return p.at(key); }

DriftModel make_interface_friction(const ParamMap& p, int dim)
{
    const double gl = get(p, "gamma_left"), gr = get(p, "gamma_right");
    const double xc = get(p, "interface"), k = get(p, "spring");
    if (gl < 0 || gr < 0 || k < 0) throw Error("drift_models", "bad_params", "friction and spring must be >= 0");
    DriftModel m;
    m.name = "interface_friction";
    m.dim = dim;
    m.class_tag = DriftClass::LinearGrowth;
    m.eval = [gl, gr, xc, k](const Vec& x, const Vec& v) {
        const double g = x[0] < xc ? gl : gr;
        return x * (-k) - v * g;
    };
    m.growth_constant = std::max({gl, gr, k});
    m.discontinuity_distance = [xc](const Vec& x, const Vec&) { return std::abs(x[0] - xc); };
    return m;
}

DriftModel make_velocity_threshold(const ParamMap& p, int dim)
{
    const double g = get(p, "gamma"), vc = get(p, "v_c"), kappa = get(p, "kappa");
    if (vc < 0) throw Error("drift_models", "bad_params", "critical speed v_c must be >= 0");
    if (g < 0 || kappa < 0) throw Error("drift_models", "bad_params", "gamma and kappa must be >= 0");
    DriftModel m;
    m.name = "velocity_threshold";
    m.dim = dim;
    m.class_tag = DriftClass::LinearGrowth;
    // Bounded confining field M(x) = -kappa x / (1 + |x|); friction only above v_c.
    m.eval = [g, vc, kappa](const Vec& x, const Vec& v) {
        Vec b = x * (-kappa / (1.0 + x.norm()));
        if (v.norm() > vc) b -= v * g;
        return b;
    };
    m.growth_constant = std::max(g, kappa);
    m.discontinuity_distance = [vc](const Vec&, const Vec& v) { return std::abs(v.norm() - vc); };
    return m;
}

DriftModel make_anisotropic_friction(const ParamMap& p, int dim)
{
    const double gp = get(p, "gamma_plus"), gm = get(p, "gamma_minus"), k = get(p, "spring");
    if (gp < 0 || gm < 0 || k < 0) throw Error("drift_models", "bad_params", "coefficients must be >= 0");
    DriftModel m;
    m.name = "anisotropic_friction";
    m.dim = dim;
    m.class_tag = DriftClass::LinearGrowth;
    m.eval = [gp, gm, k](const Vec& x, const Vec& v) {
        Vec b = x * (-k);
        for (int i = 0; i < v.dim(); ++i) {
            if (v[i] > 0) b[i] -= gp * v[i];
            else if (v[i] < 0) b[i] -= gm * v[i];
        }
        return b;
    };
    m.growth_constant = std::max({gp, gm, k});
    m.discontinuity_distance = [](const Vec&, const Vec& v) {
        double d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < v.dim(); ++i) d = std::min(d, std::abs(v[i]));
        return d;
    };
    return m;
}

DriftModel make_piecewise_field(const ParamMap& p, int dim)
{
    const double fl = get(p, "force_left"), fr = get(p, "force_right"), xc = get(p, "interface");
    DriftModel m;
    m.name = "piecewise_field";
    m.dim = dim;
    m.class_tag = DriftClass::Bounded;
    m.eval = [fl, fr, xc, dim](const Vec& x, const Vec&) {
        Vec b(dim);
        b[0] = x[0] < xc ? fl : fr;
        return b;
    };
    m.bound = std::max(std::abs(fl), std::abs(fr));
    m.growth_constant = m.bound;
    m.discontinuity_distance = [xc](const Vec& x, const Vec&) { return std::abs(x[0] - xc); };
    return m;
}

DriftModel make_tanh_field(const ParamMap& p, int dim)
{
    const double amp = get(p, "amplitude");
    DriftModel m;
    m.name = "tanh_field";
    m.dim = dim;
    m.class_tag = DriftClass::Bounded;
    m.eval = [amp, dim](const Vec& x, const Vec&) {
        Vec b(dim);
        for (int i = 0; i < dim; ++i) b[i] = amp * std::tanh(x[i]);
        return b;
    };
    m.bound = std::abs(amp) * std::sqrt(static_cast<double>(dim));
    m.growth_constant = m.bound;
    return m;
}

DriftModel make_harmonic_damped(const ParamMap& p, int dim)
{
    const double k = get(p, "k"), g = get(p, "gamma");
    if (!(k > 0) || !(g > 0)) throw Error("drift_models", "bad_params", "k and gamma must be positive");
    DriftModel m;
    m.name = "harmonic_damped";
    m.dim = dim;
    m.class_tag = DriftClass::PerturbedGradient;
    m.eval = [k, g](const Vec& x, const Vec& v) { return x * (-k) - v * g; };
    m.growth_constant = std::max(k, g);
    PGradParams pg;
    pg.U = [k](const Vec& x) { return 1.0 + 0.5 * k * x.norm2(); };
    pg.grad_U = [k](const Vec& x) { return x * k; };
    pg.Theta = [g](const Vec&, const Vec& v) { return v * (-g); };
    // -grad U . x = -k|x|^2 = -2 U + 2.
    pg.m1 = 2.0;
    pg.C1_U = 2.0;
    pg.m2 = 0.5 * k;
    pg.C2_U = 0.0;
    pg.q = 2.0;
    pg.Gamma = g;
    pg.C1_Theta = 0.0;
    pg.ell1 = 1.0;
    pg.theta_case = ThetaCase::B2;
    pg.C2_Theta = g;
    pg.ell2 = 1.0;
    m.pgrad = pg;
    return m;
}

DriftModel make_double_well_damped(const ParamMap& p, int dim)
{
    const double g = get(p, "gamma");
    if (!(g > 0)) throw Error("drift_models", "bad_params", "gamma must be positive");
    DriftModel m;
    m.name = "double_well_damped";
    m.dim = dim;
    m.class_tag = DriftClass::PerturbedGradient;
    m.eval = [g](const Vec& x, const Vec& v) { return x * (-(x.norm2() - 1.0)) - v * g; };
    PGradParams pg;
    pg.U = [](const Vec& x) {
        const double s = x.norm2() - 1.0;
        return 1.0 + 0.25 * s * s;
    };
    pg.grad_U = [](const Vec& x) { return x * (x.norm2() - 1.0); };
    pg.Theta = [g](const Vec&, const Vec& v) { return v * (-g); };
    // -(|x|^2-1)|x|^2 <= -4 U + 5 and U >= |x|^4 / 8.
    pg.m1 = 4.0;
    pg.C1_U = 5.0;
    pg.m2 = 0.125;
    pg.C2_U = 0.0;
    pg.q = 4.0;
    pg.Gamma = g;
    pg.C1_Theta = 0.0;
    pg.ell1 = 1.0;
    pg.theta_case = ThetaCase::B2;
    pg.C2_Theta = g;
    pg.ell2 = 1.0;
    m.pgrad = pg;
    return m;
}

std::mutex& registry_mutex()
{
    static std::mutex mtx;
    return mtx;
}

std::map<std::string, Entry>& registry()
{
    static std::map<std::string, Entry> reg = {
        {"interface_friction",
         {{{"gamma_left", 1.0}, {"gamma_right", 3.0}, {"interface", 0.0}, {"spring", 0.0}}, make_interface_friction}},
        {"velocity_threshold", {{{"gamma", 1.0}, {"v_c", 1.0}, {"kappa", 1.0}}, make_velocity_threshold}},
        {"anisotropic_friction",
         {{{"gamma_plus", 1.0}, {"gamma_minus", 2.0}, {"spring", 1.0}}, make_anisotropic_friction}},
        {"piecewise_field", {{{"force_left", 1.0}, {"force_right", -1.0}, {"interface", 0.0}}, make_piecewise_field}},
        {"tanh_field", {{{"amplitude", 0.2}}, make_tanh_field}},
        {"harmonic_damped", {{{"k", 1.0}, {"gamma", 1.0}}, make_harmonic_damped}},
        {"double_well_damped", {{{"gamma", 1.0}}, make_double_well_damped}},
        {"zero", {{}, [](const ParamMap&, int dim) { return zero_drift(dim); }}},
    };
    return reg;
}

}  // namespace

DriftModel zero_drift(int dim)
{
    DriftModel m;
    m.name = "zero";
    m.dim = dim;
    m.class_tag = DriftClass::Bounded;
    m.eval = [dim](const Vec&, const Vec&) { return Vec(dim); };
    m.bound = 0.0;
    m.growth_constant = 0.0;
    return m;
}

DriftModel builtin_drift(const std::string& name, const ParamMap& params, int dim)
{
    if (dim < 1 || dim > kMaxDim) throw Error("drift_models", "bad_dimension", "unsupported dimension");
    Entry entry;
    {
        std::lock_guard<std::mutex> lock(registry_mutex());
        auto it = registry().find(name);
        if (it == registry().end()) throw Error("drift_models", "unknown_drift", "unknown drift model '" + name + "'");
        entry = it->second;
    }
    ParamMap merged = entry.defaults;
    for (const auto& [key, value] : params) {
        if (!merged.count(key)) {
            throw Error("drift_models", "unknown_param", "drift '" + name + "' has no parameter '" + key + "'");
        }
        if (!std::isfinite(value)) throw Error("drift_models", "bad_params", "parameter '" + key + "' is not finite");
        merged[key] = value;
    }
    return entry.factory(merged, dim);
}

ParamMap drift_defaults(const std::string& name)
{
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(name);
    if (it == registry().end()) throw Error("drift_models", "unknown_drift", "unknown drift model '" + name + "'");
    return it->second.defaults;
}

std::vector<std::string> drift_names()
{
    std::lock_guard<std::mutex> lock(registry_mutex());
    std::vector<std::string> out;
    for (const auto& kv : registry()) out.push_back(kv.first);
    return out;
}

void register_drift(const std::string& name, ParamMap defaults, DriftFactory factory)
{
    if (name.empty() || !factory) throw Error("drift_models", "bad_registration", "name and factory are required");
    std::lock_guard<std::mutex> lock(registry_mutex());
    registry()[name] = Entry{std::move(defaults), std::move(factory)};
}

const InequalityCheck* AssumptionReport::find(const std::string& name) const
{
    for (const auto& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

namespace {

class Checker {
public:
    explicit Checker(double tol) : tol_(tol) {}

    void record(const std::string& name, double margin, const State& s)
    {
        auto it = index_.find(name);
        if (it == index_.end()) {
            index_[name] = checks_.size();
            checks_.push_back({name, margin, s, true});
            return;
        }
        InequalityCheck& c = checks_[it->second];
        if (margin < c.margin) {
            c.margin = margin;
            c.witness = s;
        }
    }

    std::vector<InequalityCheck> finish()
    {
        for (auto& c : checks_) c.passed = c.margin >= -tol_;
        return checks_;
    }

private:
    double tol_;
    std::vector<InequalityCheck> checks_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace

AssumptionReport check_assumptions(const DriftModel& model, const GridSpec& grid)
{
    const int d = model.dim;
    int n = grid.points_per_axis;
    if (n == 0) n = d == 1 ? 101 : (d == 2 ? 21 : 9);
    if (n < 1 || !(grid.R > 0)) throw Error("drift_models", "empty_grid", "assumption grid is empty");
    if (model.class_tag == DriftClass::PerturbedGradient && !model.pgrad) {
        throw Error("drift_models", "class_mismatch", "model '" + model.name +
                                                          "' is declared PerturbedGradient but has no potential U");
    }
    if (model.class_tag == DriftClass::Bounded && !model.bound) {
        throw Error("drift_models", "class_mismatch", "model '" + model.name + "' is declared Bounded without a bound");
    }
    if (model.class_tag == DriftClass::LinearGrowth && !model.growth_constant) {
        throw Error("drift_models", "class_mismatch",
                    "model '" + model.name + "' is declared LinearGrowth without a growth constant");
    }
    if (model.pgrad) {
        const auto& pg = *model.pgrad;
        if (pg.q < 2 || pg.ell1 < 1 || pg.ell1 >= pg.q || pg.ell2 < 1 || pg.ell2 >= pg.q) {
            throw Error("drift_models", "bad_params", "require q >= 2 and ell1, ell2 in [1, q)");
        }
    }

    AssumptionReport report;
    Checker checker(grid.tolerance);
    std::vector<double> axis(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) axis[static_cast<std::size_t>(k)] = n == 1 ? 0.0 : -grid.R + 2.0 * grid.R * k / (n - 1);
    std::vector<double> local_max(model.pgrad ? model.pgrad->local_radii.size() : 0, 0.0);

    const int axes = 2 * d;
    std::vector<int> idx(static_cast<std::size_t>(axes), 0);
    for (;;) {
        State s{Vec(d), Vec(d)};
        for (int i = 0; i < d; ++i) {
            s.x[i] = axis[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            s.v[i] = axis[static_cast<std::size_t>(idx[static_cast<std::size_t>(d + i)])];
        }
        const bool skip = model.discontinuity_distance && model.discontinuity_distance(s.x, s.v) <= grid.discontinuity_gap;
        if (skip) {
            ++report.points_skipped;
        } else {
            ++report.points_checked;
            const Vec b = model(s.x, s.v);
            const double bn = b.norm();
            const double xn = s.x.norm(), vn = s.v.norm();
            if (model.bound) checker.record("bounded", *model.bound - bn, s);
            if (model.growth_constant) checker.record("linear_growth", *model.growth_constant * (1 + xn + vn) - bn, s);
            if (model.pgrad) {
                const auto& pg = *model.pgrad;
                const double U = pg.U(s.x);
                const Vec gU = pg.grad_U(s.x);
                const Vec th = pg.Theta(s.x, s.v);
                checker.record("U_ge_1", U - 1.0, s);
                checker.record("decomposition", -(b - (th - gU)).norm(), s);
                checker.record("cond_U_drift", (-pg.m1 * U + pg.C1_U) - (-gU.dot(s.x)), s);
                checker.record("cond_U_growth", U - (pg.m2 * std::pow(xn, pg.q) - pg.C2_U), s);
                checker.record("cond_gamma_A", -pg.Gamma * vn * vn + pg.C1_Theta * (1 + std::pow(xn, pg.ell1)) - th.dot(s.v),
                               s);
                if (pg.theta_case == ThetaCase::B1) {
                    checker.record("cond_gamma_B1", pg.C2_Theta * (1 + vn * vn + std::pow(xn, pg.ell2)) - th.dot(s.x), s);
                    for (std::size_t r = 0; r < pg.local_radii.size(); ++r) {
                        if (xn <= pg.local_radii[r]) local_max[r] = std::max(local_max[r], th.norm() / (1 + vn));
                    }
                } else {
                    checker.record("cond_gamma_B2", pg.C2_Theta * (1 + vn + std::pow(xn, pg.ell2 - 1)) - th.norm(), s);
                }
            }
        }
        int a = 0;
        while (a < axes && ++idx[static_cast<std::size_t>(a)] == n) idx[static_cast<std::size_t>(a++)] = 0;
        if (a == axes) break;
    }
    if (report.points_checked == 0) throw Error("drift_models", "empty_grid", "every grid point was skipped");
    report.checks = checker.finish();
    if (model.pgrad) {
        for (std::size_t r = 0; r < local_max.size(); ++r) {
            report.local_constants.emplace_back(model.pgrad->local_radii[r], local_max[r]);
        }
    }
    report.passed = std::all_of(report.checks.begin(), report.checks.end(), [](const auto& c) { return c.passed; });
    return report;
}

bool AbInterval::satisfied_at(double b) const
{
    if (!(b > 0) || !(b < a)) return false;
    if (q == 2 && !(b < m2 * a / 2)) return false;
    if (theta_case == ThetaCase::B1) return b < a * Gamma / (1 + C2_Theta);
    if (q > 2) return 2 * b < a * Gamma;
    return std::sqrt(b) < m1 * m2 / (C2_Theta * C2_Theta) && std::sqrt(b) + b < a * Gamma;
}

AbInterval admissible_ab(const PGradParams& pg, double a)
{
    if (!(a > 0)) throw Error("drift_models", "bad_params", "a must be positive");
    AbInterval out;
    out.a = a;
    out.Gamma = pg.Gamma;
    out.m1 = pg.m1;
    out.m2 = pg.m2;
    out.C2_Theta = pg.C2_Theta;
    out.q = pg.q;
    out.theta_case = pg.theta_case;

    out.constraints.push_back({"b < a", a});
    if (pg.q == 2) out.constraints.push_back({"b < m2 a / 2", pg.m2 * a / 2});
    if (pg.theta_case == ThetaCase::B1) {
        out.constraints.push_back({"b < a Gamma / (1 + C2_Theta)", a * pg.Gamma / (1 + pg.C2_Theta)});
    } else if (pg.q > 2) {
        out.constraints.push_back({"2 b < a Gamma", a * pg.Gamma / 2});
    } else {
        const double k = pg.m1 * pg.m2 / (pg.C2_Theta * pg.C2_Theta);
        out.constraints.push_back({"sqrt(b) < m1 m2 / C2_Theta^2", k > 0 ? k * k : 0.0});
        // sqrt(b) + b < a Gamma  <=>  sqrt(b) < (-1 + sqrt(1 + 4 a Gamma)) / 2.
        const double aG = a * pg.Gamma;
        const double s = aG > 0 ? 2 * aG / (1 + std::sqrt(1 + 4 * aG)) : 0.0;
        out.constraints.push_back({"sqrt(b) + b < a Gamma", s * s});
    }
    out.b_max = std::numeric_limits<double>::infinity();
    for (const auto& c : out.constraints) {
        if (c.b_bound < out.b_max) {
            out.b_max = c.b_bound;
            out.binding = c.name;
        }
    }
    if (!(out.b_max > 0)) {
        throw Error("drift_models", "infeasible_ab", "no admissible b; binding constraint: " + out.binding);
    }
    return out;
}

}  // namespace kinlevy
