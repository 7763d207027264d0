#pragma once

#include <functional>
#include <vector>

#include "kinlevy/drift_models.hpp"
#include "kinlevy/killed_process.hpp"
#include "kinlevy/stable_noise.hpp"

namespace kinlevy {

/// Test function on phase space with its partial gradients and a
/// description of its growth in v, used to control the nonlocal tail.
struct VFunction {
    std::function<double(const State&)> value;
    std::function<Vec(const State&)> grad_x;
    std::function<Vec(const State&)> grad_v;
    /// Growth exponent gamma in v; must be < alpha.
    double growth = 0.0;
    /// C_W(x, v) with |W(x, v+z) - W(x, v)| <= C_W |z|^gamma for |z| >= 1.
    std::function<double(const State&)> envelope;
    /// Optional A(x, v): W(x, v+z) averages to A |z|^gamma on large spheres.
    /// When present the truncated tail is added back analytically.
    std::function<double(const State&)> tail_mean;
};

struct QuadSpec {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    /// Target for the envelope tail bound, relative to max(1, |W|).
    double tail_tol = 1e-8;
    double z_cap = 1e6;
    int max_intervals = 5000;
    int angular_points = 32;
    /// Below this radius the second difference is replaced by its Taylor term.
    double taylor_radius = 1e-3;
};

struct GeneratorValue {
    double value = 0.0;
    double transport = 0.0;  // v . grad_x W
    double drift = 0.0;      // B . grad_v W
    double nonlocal = 0.0;   // S_v W
    double z_max = 0.0;
    double tail_bound = 0.0;
    double quad_error = 0.0;
    bool converged = true;
    bool tail_within_tolerance = true;
};

/// (L W)(x, v) = v . grad_x W + B . grad_v W + S_v W, with the nonlocal part
/// by quadrature split at |z| = 1. `model` may be null (B = 0). d in {1, 2}.
GeneratorValue apply_generator(const VFunction& W, const DriftModel* model, const StableNoiseSpec& spec,
                               const State& point, const QuadSpec& quad = {});

/// W(x, v) = cos(xi . v), exact generator -|xi|^alpha cos(xi . v) when B = 0.
VFunction cosine_function(const Vec& xi);

struct LyapunovParams {
    double a = 1.0;
    double b = 0.0;
    double p = 0.5;
    double shift = 1.0;  // C_m + 1
    double m = 0.0;
    double M = 0.0;
    double b_max = 0.0;
};

class LyapunovFunction {
public:
    LyapunovFunction(PGradParams pgrad, LyapunovParams params);

    const LyapunovParams& params() const noexcept { return params_; }
    const PGradParams& pgrad() const noexcept { return pgrad_; }

    double F0(const State& s) const;
    double F(const State& s) const { return F0(s) + params_.shift; }
    double value(const State& s) const;
    Vec grad_x(const State& s) const;
    Vec grad_v(const State& s) const;
    /// As a VFunction (optionally scaled by kappa > 0).
    VFunction as_function(double kappa = 1.0) const;

private:
    PGradParams pgrad_;
    LyapunovParams params_;
};

/// Builds F = a[U + |v|^2/2] + b x.v + shift and W_p = F^{p/2}. The shift is
/// 1.2 times the grid deficit of F_0 - m (U + |v|^2), plus one.
LyapunovFunction build_lyapunov(const PGradParams& pgrad, double a, double b, double p, double alpha,
                                const GridSpec& grid = {}, int dim = 1);

struct ShellRow {
    double r = 0.0;
    double sup_ratio = 0.0;
    State argmax;
    std::size_t points = 0;
    std::size_t failures = 0;
};

struct DriftConditionReport {
    std::vector<ShellRow> rows;
    double c_hat = 0.0;      // -(max ratio over the outer three shells)
    double inner_sup = 0.0;  // max ratio over the other shells
    bool passed = false;
    double failure_fraction = 0.0;
};

/// Phase-space points on the joint-norm sphere of radius r (deterministic).
std::vector<State> shell_points(int dim, double r, std::size_t count);

DriftConditionReport drift_condition_report(const LyapunovFunction& W, const DriftModel& model,
                                            const StableNoiseSpec& spec, const std::vector<double>& radii,
                                            std::size_t samples_per_shell = 32, const QuadSpec& quad = {},
                                            unsigned threads = 1);

struct DpEstimate {
    double D_p = 0.0;
    State argmax;
};

/// sup of L W_p / W_p over the box [-R, R]^{2d} (n points per axis).
DpEstimate estimate_Dp(const LyapunovFunction& W, const DriftModel& model, const StableNoiseSpec& spec, double R,
                       int points_per_axis, const QuadSpec& quad = {}, unsigned threads = 1);

struct SupermartingaleRow {
    double R = 0.0;
    double estimate = 0.0;
    Interval ci;
    double bound = 0.0;
    bool ok = true;
};

struct SupermartingaleReport {
    double W0 = 0.0;
    double D_p = 0.0;
    std::vector<SupermartingaleRow> rows;
    bool passed = true;
};

/// P[sup_{s<=t} W_p(X_s) >= R] against W_p(x0) e^{D_p t} / R.
SupermartingaleReport supermartingale_probe(const LyapunovFunction& W, const DriftModel& model,
                                            const StableNoiseSpec& spec, const State& x0,
                                            const std::vector<double>& R_levels, double t, double D_p,
                                            const McOptions& options, const StreamKey& key);

}  // namespace kinlevy
