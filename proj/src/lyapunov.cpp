#include "kinlevy/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "kinlevy/parallel.hpp"
#include "kinlevy/quadrature.hpp"

namespace kinlevy {

namespace {

// Angular second difference at radius r: sum over directions of
// W(v + r e) + W(v - r e) - 2 W(v), weighted so that integrating against
// c r^{-1-alpha} dr gives the nonlocal operator. In d = 1 there is one
// "direction" with weight 1.
class SecondDifference {
public:
    SecondDifference(const VFunction& W, const State& s, int angular_points)
        : W_(W), s_(s), w0_(W.value(s)), dim_(s.v.dim())
    {
        if (dim_ == 1) {
            dirs_.push_back(Vec{1.0});
            weight_ = 1.0;
        } else {
            const int n = std::max(4, angular_points);
            for (int k = 0; k < n; ++k) {
                const double th = std::numbers::pi * k / n;
                dirs_.push_back(Vec{std::cos(th), std::sin(th)});
            }
            weight_ = std::numbers::pi / n;
        }
    }

    double w0() const noexcept { return w0_; }

    double operator()(double r) const
    {
        double acc = 0.0;
        for (const Vec& e : dirs_) {
            State p = s_, m = s_;
            p.v += e * r;
            m.v -= e * r;
            acc += W_.value(p) + W_.value(m) - 2.0 * w0_;
        }
        return weight_ * acc;
    }

private:
    const VFunction& W_;
    State s_;
    double w0_;
    int dim_;
    std::vector<Vec> dirs_;
    double weight_ = 1.0;
};

// Adaptive quadrature that bisects the interval when the interval budget runs
// out, for integrands that oscillate many times on a far panel.
QuadResult integrate_split(const std::function<double(double)>& f, double lo, double hi, double abs_tol,
                           double rel_tol, int max_intervals, int depth = 0)
{
    QuadResult q = integrate_adaptive(f, lo, hi, abs_tol, rel_tol, max_intervals);
    if (q.converged || depth >= 12) return q;
    const double mid = 0.5 * (lo + hi);
    const QuadResult a = integrate_split(f, lo, mid, 0.5 * abs_tol, rel_tol, max_intervals, depth + 1);
    const QuadResult b = integrate_split(f, mid, hi, 0.5 * abs_tol, rel_tol, max_intervals, depth + 1);
    QuadResult out = a;
    out.value = a.value + b.value;
    out.error = a.error + b.error;
    out.converged = a.converged && b.converged;
    out.intervals = a.intervals + b.intervals;
    return out;
}

void require_converged(const QuadResult& q, const char* what)
{
    if (!q.converged) {
        throw Error("lyapunov", "quadrature_failed", std::string("quadrature did not converge: ") + what);
    }
}

}  // namespace

GeneratorValue apply_generator(const VFunction& W, const DriftModel* model, const StableNoiseSpec& spec,
                               const State& point, const QuadSpec& quad)
{
    const int d = spec.dim();
    if (d != 1 && d != 2) throw Error("lyapunov", "unsupported_dim", "generator quadrature supports d = 1, 2");
    if (point.x.dim() != d || point.v.dim() != d) throw Error("lyapunov", "dim_mismatch", "point dimension");
    const double alpha = spec.alpha();
    const double gamma = W.growth;
    if (!(gamma < alpha)) throw Error("lyapunov", "tail_unavailable", "growth exponent of W must be below alpha");

    GeneratorValue out;
    if (W.grad_x) out.transport = point.v.dot(W.grad_x(point));
    if (model != nullptr && W.grad_v) out.drift = (*model)(point.x, point.v).dot(W.grad_v(point));

    const double c = spec.c_alpha_d();
    const SecondDifference D(W, point, quad.angular_points);
    const double w0 = D.w0();
    const double tol_scale = std::max(1.0, std::abs(w0));

    // Inner part |z| <= 1. On [0, z0] the second difference is r^2 times its
    // Taylor coefficient; on [z0, 1] substitute u = r^{2-alpha}, under which
    // r^{-1-alpha} dr = du / ((2 - alpha) r^2).
    const double z0 = quad.taylor_radius;
    const double taylor = D(z0) / (z0 * z0);
    double inner = c * taylor * std::pow(z0, 2.0 - alpha) / (2.0 - alpha);
    const double e = 2.0 - alpha;
    const QuadResult qi = integrate_adaptive(
        [&](double u) {
            const double r = std::pow(u, 1.0 / e);
            return D(r) / (r * r * e);
        },
        std::pow(z0, e), 1.0, quad.abs_tol * tol_scale, quad.rel_tol, quad.max_intervals);
    require_converged(qi, "inner");
    inner += c * qi.value;
    out.quad_error += c * qi.error;

    // Outer part |z| > 1 on geometric panels [2^k, 2^{k+1}].
    const double sphere = spec.sphere_area();
    const double env = W.envelope ? W.envelope(point) : std::numeric_limits<double>::infinity();
    const double tail_target = quad.tail_tol * tol_scale;
    auto envelope_bound = [&](double Z) { return c * sphere * env * std::pow(Z, gamma - alpha) / (alpha - gamma); };
    double Z_env = quad.z_cap;
    if (std::isfinite(env)) {
        if (env <= 0.0) {
            Z_env = 1.0;
        } else {
            Z_env = std::pow(c * sphere * env / ((alpha - gamma) * tail_target), 1.0 / (alpha - gamma));
        }
    }
    const double Z_limit = std::min(std::max(Z_env, 1.0), quad.z_cap);
    auto tail_model = [&](double Z) {
        if (!W.tail_mean) return 0.0;
        const double A = W.tail_mean(point);
        return c * sphere * (A * std::pow(Z, gamma - alpha) / (alpha - gamma) - w0 * std::pow(Z, -alpha) / alpha);
    };

    double outer = 0.0;
    double lo = 1.0;
    double previous_total = std::numeric_limits<double>::quiet_NaN();
    int quiet_panels = 0;
    double last_change = std::numeric_limits<double>::infinity();
    while (lo < Z_limit) {
        const double hi = std::min(2.0 * lo, Z_limit);
        const QuadResult qo = integrate_split([&](double r) { return D(r) * std::pow(r, -1.0 - alpha); }, lo, hi,
                                              quad.abs_tol * tol_scale, quad.rel_tol, quad.max_intervals);
        require_converged(qo, "outer");
        outer += c * qo.value;
        out.quad_error += c * qo.error;
        lo = hi;
        if (W.tail_mean) {
            // With an asymptotic tail model, stop once the corrected total
            // settles for two consecutive panels.
            const double total = outer + tail_model(lo);
            if (std::isfinite(previous_total)) {
                last_change = std::abs(total - previous_total);
                quiet_panels = last_change < tail_target ? quiet_panels + 1 : 0;
                if (quiet_panels >= 2) break;
            }
            previous_total = total;
        }
    }
    out.z_max = lo;
    if (W.tail_mean) {
        outer += tail_model(lo);
        out.tail_bound = lo <= 1.0 ? 0.0 : last_change;
    } else {
        out.tail_bound = std::isfinite(env) ? (env <= 0.0 ? 0.0 : envelope_bound(lo))
                                            : std::numeric_limits<double>::infinity();
    }
    out.tail_within_tolerance = out.tail_bound <= tail_target;

    out.nonlocal = inner + outer;
    out.value = out.transport + out.drift + out.nonlocal;
    return out;
}

VFunction cosine_function(const Vec& xi)
{
    VFunction f;
    f.value = [xi](const State& s) { return std::cos(xi.dot(s.v)); };
    f.grad_x = [xi](const State&) { return Vec(xi.dim()); };
    f.grad_v = [xi](const State& s) { return xi * (-std::sin(xi.dot(s.v))); };
    f.growth = 0.0;
    f.envelope = [](const State&) { return 2.0; };
    f.tail_mean = [](const State&) { return 0.0; };
    return f;
}

LyapunovFunction::LyapunovFunction(PGradParams pgrad, LyapunovParams params)
    : pgrad_(std::move(pgrad)), params_(params)
{
}

double LyapunovFunction::F0(const State& s) const
{
    return params_.a * (pgrad_.U(s.x) + 0.5 * s.v.norm2()) + params_.b * s.x.dot(s.v);
}

double LyapunovFunction::value(const State& s) const
{
    return std::pow(F(s), 0.5 * params_.p);
}

Vec LyapunovFunction::grad_x(const State& s) const
{
    const double k = 0.5 * params_.p * std::pow(F(s), 0.5 * params_.p - 1.0);
    return (pgrad_.grad_U(s.x) * params_.a + s.v * params_.b) * k;
}

Vec LyapunovFunction::grad_v(const State& s) const
{
    const double k = 0.5 * params_.p * std::pow(F(s), 0.5 * params_.p - 1.0);
    return (s.v * params_.a + s.x * params_.b) * k;
}

VFunction LyapunovFunction::as_function(double kappa) const
{
    if (!(kappa > 0)) throw Error("lyapunov", "bad_scale", "kappa must be positive");
    VFunction f;
    const LyapunovFunction self = *this;
    const double a = params_.a, b = params_.b, p = params_.p;
    f.value = [self, kappa](const State& s) { return kappa * self.value(s); };
    f.grad_x = [self, kappa](const State& s) { return self.grad_x(s) * kappa; };
    f.grad_v = [self, kappa](const State& s) { return self.grad_v(s) * kappa; };
    f.growth = p;
    // F(v+z) - F(v) = (a v + b x) . z + a |z|^2 / 2 and s -> s^{p/2} is
    // subadditive, so for |z| >= 1 the increment is at most C_W |z|^p.
    f.envelope = [kappa, a, b, p](const State& s) {
        const double lin = (s.v * a + s.x * b).norm();
        return kappa * (std::pow(lin, 0.5 * p) + std::pow(0.5 * a, 0.5 * p));
    };
    f.tail_mean = [kappa, a, p](const State&) { return kappa * std::pow(0.5 * a, 0.5 * p); };
    return f;
}

namespace {

// Grid over [-R, R]^{2d} with n points per axis, visited by index.
struct PhaseLattice {
    int dim;
    int n;
    double R;
    std::size_t size() const
    {
        std::size_t s = 1;
        for (int k = 0; k < 2 * dim; ++k) s *= static_cast<std::size_t>(n);
        return s;
    }
    State at(std::size_t idx) const
    {
        State s{Vec(dim), Vec(dim)};
        for (int k = 0; k < 2 * dim; ++k) {
            const auto j = static_cast<int>(idx % static_cast<std::size_t>(n));
            idx /= static_cast<std::size_t>(n);
            const double c = n == 1 ? 0.0 : -R + 2.0 * R * j / (n - 1);
            if (k < dim) s.x[k] = c;
            else s.v[k - dim] = c;
        }
        return s;
    }
    bool on_boundary(const State& s) const
    {
        for (int k = 0; k < dim; ++k) {
            if (std::abs(std::abs(s.x[k]) - R) < 1e-12 || std::abs(std::abs(s.v[k]) - R) < 1e-12) return true;
        }
        return false;
    }
};

int default_points(const GridSpec& g, int dim)
{
    if (g.points_per_axis > 0) return g.points_per_axis;
    return dim == 1 ? 101 : 21;
}

}  // namespace

LyapunovFunction build_lyapunov(const PGradParams& pgrad, double a, double b, double p, double alpha,
                                const GridSpec& grid, int dim)
{
    if (dim < 1 || dim > 2) throw Error("lyapunov", "unsupported_dim", "Lyapunov construction supports d = 1, 2");
    if (!pgrad.U || !pgrad.grad_U) throw Error("lyapunov", "missing_potential", "U and grad U are required");
    if (!(a > 0)) throw Error("lyapunov", "bad_a", "a must be positive");
    if (!(p > 0 && p < alpha)) throw Error("lyapunov", "bad_exponent", "p must lie in (0, alpha)");
    if (!(b >= 0)) throw Error("lyapunov", "b_not_admissible", "b must be nonnegative");

    LyapunovParams params;
    params.a = a;
    params.b = b;
    params.p = p;
    params.shift = 0.0;
    if (b > 0) {
        const AbInterval ab = admissible_ab(pgrad, a);
        params.b_max = ab.b_max;
        if (!(b < ab.b_max)) {
            throw Error("lyapunov", "b_not_admissible",
                        "b = " + std::to_string(b) + " outside (0, " + std::to_string(ab.b_max) + ")");
        }
    } else {
        try {
            params.b_max = admissible_ab(pgrad, a).b_max;
        } catch (const Error&) {
            params.b_max = 0.0;
        }
    }

    const LyapunovFunction raw(pgrad, params);
    const PhaseLattice lat{dim, default_points(grid, dim), grid.R};
    const std::size_t n = lat.size();

    double min_ratio = std::numeric_limits<double>::infinity();
    double min_outer_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const State s = lat.at(i);
        const double H = pgrad.U(s.x) + s.v.norm2();
        const double r = raw.F0(s) / H;
        min_ratio = std::min(min_ratio, r);
        if (lat.on_boundary(s)) min_outer_ratio = std::min(min_outer_ratio, r);
    }
    double m;
    if (min_ratio > 0) {
        m = 0.5 * min_ratio;
    } else if (min_outer_ratio > 0) {
        m = 0.5 * min_outer_ratio;
    } else {
        throw Error("lyapunov", "F0_unbounded_below",
                    "F_0 is not coercive on the grid; the (a, b) constraints are violated");
    }
    double deficit = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const State s = lat.at(i);
        const double H = pgrad.U(s.x) + s.v.norm2();
        deficit = std::max(deficit, m * H - raw.F0(s));
    }
    params.m = m;
    params.shift = 1.2 * deficit + 1.0;
    LyapunovFunction built(pgrad, params);
    double M = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const State s = lat.at(i);
        M = std::max(M, built.F(s) / (pgrad.U(s.x) + s.v.norm2()));
    }
    params.M = M;
    return LyapunovFunction(pgrad, params);
}

std::vector<State> shell_points(int dim, double r, std::size_t count)
{
    std::vector<State> pts;
    pts.reserve(count);
    if (dim == 1) {
        for (std::size_t k = 0; k < count; ++k) {
            const double th = 2.0 * std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
            pts.push_back(State{Vec{r * std::cos(th)}, Vec{r * std::sin(th)}});
        }
        return pts;
    }
    // Fixed-seed Gaussian directions on S^{2d-1}.
    const StreamKey key(0x5eedULL, "lyapunov.shell");
    for (std::size_t k = 0; k < count; ++k) {
        RandomStream rs = key.stream(k);
        State s{Vec(dim), Vec(dim)};
        for (int i = 0; i < dim; ++i) s.x[i] = rs.normal();
        for (int i = 0; i < dim; ++i) s.v[i] = rs.normal();
        const double nrm = phase_norm(s);
        s.x *= r / nrm;
        s.v *= r / nrm;
        pts.push_back(s);
    }
    return pts;
}

namespace {

struct RatioResult {
    double ratio = 0.0;
    bool ok = false;
};

RatioResult ratio_at(const VFunction& f, const DriftModel& model, const StableNoiseSpec& spec, const State& s,
                     const QuadSpec& quad)
{
    try {
        const GeneratorValue g = apply_generator(f, &model, spec, s, quad);
        const double w = f.value(s);
        if (!std::isfinite(g.value) || !(w > 0)) return {};
        return {g.value / w, true};
    } catch (const Error&) {
        return {};
    }
}

}  // namespace

DriftConditionReport drift_condition_report(const LyapunovFunction& W, const DriftModel& model,
                                            const StableNoiseSpec& spec, const std::vector<double>& radii,
                                            std::size_t samples_per_shell, const QuadSpec& quad, unsigned threads)
{
    if (samples_per_shell < 32) throw Error("lyapunov", "too_few_samples", "shells need at least 32 points");
    if (radii.size() < 3) throw Error("lyapunov", "too_few_shells", "need at least three radii");
    std::vector<double> rs = radii;
    std::sort(rs.begin(), rs.end());
    const VFunction f = W.as_function();

    DriftConditionReport rep;
    std::size_t total = 0, failed = 0;
    for (double r : rs) {
        const auto pts = shell_points(spec.dim(), r, samples_per_shell);
        std::vector<RatioResult> res(pts.size());
        parallel_for(pts.size(), threads, [&](std::size_t i) { res[i] = ratio_at(f, model, spec, pts[i], quad); });
        ShellRow row;
        row.r = r;
        row.points = pts.size();
        row.sup_ratio = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!res[i].ok) {
                ++row.failures;
                continue;
            }
            if (res[i].ratio > row.sup_ratio) {
                row.sup_ratio = res[i].ratio;
                row.argmax = pts[i];
            }
        }
        total += row.points;
        failed += row.failures;
        rep.rows.push_back(row);
    }
    const std::size_t k = rep.rows.size();
    double outer_sup = -std::numeric_limits<double>::infinity();
    for (std::size_t i = k - 3; i < k; ++i) outer_sup = std::max(outer_sup, rep.rows[i].sup_ratio);
    rep.inner_sup = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 3 < k; ++i) rep.inner_sup = std::max(rep.inner_sup, rep.rows[i].sup_ratio);
    rep.c_hat = -outer_sup;
    rep.failure_fraction = total == 0 ? 0.0 : static_cast<double>(failed) / static_cast<double>(total);
    const bool inner_finite = k <= 3 || std::isfinite(rep.inner_sup);
    rep.passed = rep.c_hat > 0 && std::isfinite(rep.c_hat) && inner_finite && rep.failure_fraction <= 0.01;
    return rep;
}

DpEstimate estimate_Dp(const LyapunovFunction& W, const DriftModel& model, const StableNoiseSpec& spec, double R,
                       int points_per_axis, const QuadSpec& quad, unsigned threads)
{
    if (points_per_axis < 2) throw Error("lyapunov", "bad_grid", "need at least two points per axis");
    const PhaseLattice lat{spec.dim(), points_per_axis, R};
    const VFunction f = W.as_function();
    std::vector<RatioResult> res(lat.size());
    parallel_for(res.size(), threads, [&](std::size_t i) { res[i] = ratio_at(f, model, spec, lat.at(i), quad); });
    DpEstimate out;
    out.D_p = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < res.size(); ++i) {
        if (!res[i].ok) throw Error("lyapunov", "quadrature_failed", "generator failed on the D_p grid");
        if (res[i].ratio > out.D_p) {
            out.D_p = res[i].ratio;
            out.argmax = lat.at(i);
        }
    }
    return out;
}

SupermartingaleReport supermartingale_probe(const LyapunovFunction& W, const DriftModel& model,
                                            const StableNoiseSpec& spec, const State& x0,
                                            const std::vector<double>& R_levels, double t, double D_p,
                                            const McOptions& options, const StreamKey& key)
{
    if (!(t >= 0)) throw Error("lyapunov", "bad_time", "t must be nonnegative");
    SupermartingaleReport rep;
    rep.W0 = W.value(x0);
    rep.D_p = D_p;
    std::vector<double> running_max(options.paths, rep.W0);
    if (t > 0) {
        const KineticStepper stepper(model, options.truncation_radius);
        const double inv_alpha = 1.0 / spec.alpha();
        parallel_for(options.paths, options.threads, [&](std::size_t i) {
            RandomStream rs = key.stream(i);
            State s = x0;
            bool truncated = false;
            double now = 0.0;
            while (now < t - 1e-12) {
                const double h = std::min(options.step, t - now);
                const Vec dL = sample_stable_unit(spec, rs) * std::pow(h, inv_alpha);
                if (!stepper.advance(s, h, dL, truncated)) {
                    running_max[i] = std::numeric_limits<double>::infinity();
                    return;
                }
                running_max[i] = std::max(running_max[i], W.value(s));
                now += h;
            }
        });
    }
    for (double R : R_levels) {
        SupermartingaleRow row;
        row.R = R;
        std::size_t hits = 0;
        for (double m : running_max) hits += m >= R ? 1 : 0;
        row.estimate = static_cast<double>(hits) / static_cast<double>(options.paths);
        row.ci = wilson_interval(hits, options.paths);
        row.bound = rep.W0 * std::exp(D_p * t) / R;
        // The bound is rigorous; only a statistically clear excess counts.
        row.ok = row.ci.lo <= row.bound;
        rep.passed = rep.passed && row.ok;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace kinlevy
