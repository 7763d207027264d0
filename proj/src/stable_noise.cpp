#include "kinlevy/stable_noise.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/beta.hpp>

#include "kinlevy/parallel.hpp"
#include "kinlevy/quadrature.hpp"

namespace kinlevy {

namespace {

double unit_sphere_area(int d)
{
    return 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
}

// 2 int_0^inf (1 - cos r) r^{-1-alpha} dr.
double one_dim_cos_integral(double alpha)
{
    // [0, 1]: with u = r^{2-alpha} the integrand (1 - cos r) / r^2 / (2 - alpha) is smooth.
    auto inner = [alpha](double u) {
        const double r = std::pow(u, 1.0 / (2.0 - alpha));
        double h;
        if (r < 1e-2) {
            const double r2 = r * r;
            h = 0.5 - r2 / 24.0 + r2 * r2 / 720.0;
        } else {
            h = (1.0 - std::cos(r)) / (r * r);
        }
        return h / (2.0 - alpha);
    };
    double total = integrate_adaptive(inner, 0.0, 1.0, 1e-14, 1e-13).value;

    // [1, inf): the r^{-1-alpha} part is exact, the cosine part runs over whole
    // periods up to R and the remainder uses two integration-by-parts terms.
    total += 1.0 / alpha;
    const double s = 1.0 + alpha;
    auto osc = [s](double r) { return std::cos(r) * std::pow(r, -s); };
    const int periods = 1000;
    const double R = 2.0 * M_PI * periods;
    double cos_part = integrate_adaptive(osc, 1.0, 2.0 * M_PI, 1e-15, 1e-13).value;
    for (int k = 1; k < periods; ++k) {
        cos_part += integrate_adaptive(osc, 2.0 * M_PI * k, 2.0 * M_PI * (k + 1), 1e-16, 1e-12).value;
    }
    cos_part += -std::sin(R) * std::pow(R, -s) + s * std::cos(R) * std::pow(R, -s - 1.0);
    total -= cos_part;
    return 2.0 * total;
}

// int over R^{d-1} of (1 + |w|^2)^{-(d+alpha)/2} dw; equals 1 for d = 1.
double transverse_factor(double alpha, int d)
{
    if (d == 1) return 1.0;
    // w = tan(theta) radially: |S^{d-2}| int_0^{pi/2} sin^{d-2} cos^{alpha}.
    auto f = [alpha, d](double th) { return std::pow(std::sin(th), d - 2) * std::pow(std::cos(th), alpha); };
    const double radial = integrate_adaptive(f, 0.0, 0.5 * M_PI, 1e-15, 1e-13).value;
    return unit_sphere_area(d - 1) * radial;
}

// Fraction of the unit sphere S^{d-1} with u . e > tau.
double cap_fraction(int d, double tau)
{
    tau = std::clamp(tau, -1.0, 1.0);
    if (d == 2) return std::acos(tau) / M_PI;
    if (d == 3) return 0.5 * (1.0 - tau);
    const double half = 0.5 * boost::math::ibeta(0.5 * (d - 1), 0.5, 1.0 - tau * tau);
    return tau >= 0.0 ? half : 1.0 - half;
}

}  // namespace

double cos_moment_integral(double alpha, int dim)
{
    return transverse_factor(alpha, dim) * one_dim_cos_integral(alpha);
}

StableNoiseSpec::StableNoiseSpec(double alpha, int dim, double delta_default)
    : alpha_(alpha), dim_(dim), delta_default_(delta_default), sphere_area_(0.0), c_(0.0)
{
    if (!(alpha > 0.0 && alpha < 2.0)) throw Error("stable_noise", "bad_alpha", "alpha must lie in (0, 2)");
    if (dim < 1 || dim > kMaxDim) throw Error("stable_noise", "bad_dimension", "unsupported dimension");
    if (!(delta_default > 0.0 && delta_default <= 1.0)) {
        throw Error("stable_noise", "bad_delta", "delta must lie in (0, 1]");
    }
    sphere_area_ = unit_sphere_area(dim);
    // CF identity c * I = 1 at |xi| = 1, solved by Newton from c = 1.
    const double I = cos_moment_integral(alpha, dim);
    double c = 1.0;
    for (int it = 0; it < 50; ++it) {
        const double g = c * I - 1.0;
        const double step = g / I;
        c -= step;
        if (std::abs(step) <= 1e-15 * c) break;
    }
    c_ = c;
}

double StableNoiseSpec::big_rate(double delta) const
{
    if (!(delta > 0.0)) throw Error("stable_noise", "bad_delta", "threshold must be positive");
    return c_ * sphere_area_ * std::pow(delta, -alpha_) / alpha_;
}

double StableNoiseSpec::small_second_moment(double delta) const
{
    if (!(delta > 0.0)) throw Error("stable_noise", "bad_delta", "threshold must be positive");
    return c_ * sphere_area_ * std::pow(delta, 2.0 - alpha_) / (2.0 - alpha_);
}

double StableNoiseSpec::shell_measure(double r1, double r2) const
{
    if (r2 <= r1) return 0.0;
    const double hi = std::isinf(r2) ? 0.0 : std::pow(r2, -alpha_);
    return c_ * sphere_area_ * (std::pow(r1, -alpha_) - hi) / alpha_;
}

double StableNoiseSpec::ball_measure(const Vec& center, double radius, double delta) const
{
    if (center.dim() != dim_) throw Error("stable_noise", "dimension_mismatch", "ball center has wrong dimension");
    if (!(radius > 0.0) || !(delta > 0.0)) return 0.0;
    if (dim_ == 1) {
        const double a = center[0] - radius, b = center[0] + radius;
        double m = 0.0;
        // Positive piece, then the mirrored negative piece.
        const double p1 = std::max(a, delta);
        if (b > p1) m += 0.5 * shell_measure(p1, b);
        const double n1 = std::max(-b, delta);
        if (-a > n1) m += 0.5 * shell_measure(n1, -a);
        return m;
    }
    const double cn = center.norm();
    if (cn == 0.0) return radius > delta ? shell_measure(delta, radius) : 0.0;
    const double r_lo = std::max(delta, cn - radius);
    const double r_hi = cn + radius;
    if (r_hi <= r_lo) return 0.0;
    const double alpha = alpha_;
    const int d = dim_;
    auto f = [&](double r) {
        const double tau = (r * r + cn * cn - radius * radius) / (2.0 * r * cn);
        return std::pow(r, -1.0 - alpha) * cap_fraction(d, tau);
    };
    // Split at the radius where the cap becomes the full sphere (kink).
    double total = 0.0;
    const double kink = radius - cn;
    if (kink > r_lo && kink < r_hi) {
        total += integrate_adaptive(f, r_lo, kink, 0.0, 1e-11).value;
        total += integrate_adaptive(f, kink, r_hi, 0.0, 1e-11).value;
    } else {
        total = integrate_adaptive(f, r_lo, r_hi, 0.0, 1e-11).value;
    }
    return c_ * sphere_area_ * total;
}

double levy_density(const StableNoiseSpec& spec, const Vec& z)
{
    const double r = z.norm();
    if (r == 0.0) throw Error("stable_noise", "singular_point", "Levy density is singular at z = 0");
    return spec.c_alpha_d() * std::pow(r, -spec.dim() - spec.alpha());
}

Vec sample_direction(int dim, RandomStream& stream)
{
    Vec u(dim);
    if (dim == 1) {
        u[0] = stream.uniform() < 0.5 ? -1.0 : 1.0;
        return u;
    }
    double n2;
    do {
        for (int i = 0; i < dim; ++i) u[i] = stream.normal();
        n2 = u.norm2();
    } while (n2 < 1e-300);
    return u * (1.0 / std::sqrt(n2));
}

Vec sample_stable_unit(const StableNoiseSpec& spec, RandomStream& stream)
{
    const double alpha = spec.alpha();
    const int d = spec.dim();
    if (d == 1) {
        // Chambers-Mallows-Stuck, symmetric case; CF exp(-|xi|^alpha).
        const double u = M_PI * (stream.uniform() - 0.5);
        Vec z(1);
        if (alpha == 1.0) {
            z[0] = std::tan(u);
            return z;
        }
        const double e = stream.exponential();
        z[0] = std::sin(alpha * u) / std::pow(std::cos(u), 1.0 / alpha) *
               std::pow(std::cos((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
        return z;
    }
    // Sub-Gaussian form sqrt(A) G with G ~ N(0, 2 I) and A positive
    // (alpha/2)-stable with Laplace transform exp(-s^{alpha/2}) (Kanter).
    const double a = 0.5 * alpha;
    const double u = M_PI * stream.uniform();
    const double e = stream.exponential();
    const double A = std::sin(a * u) / std::pow(std::sin(u), 1.0 / a) *
                     std::pow(std::sin((1.0 - a) * u) / e, (1.0 - a) / a);
    const double scale = std::sqrt(2.0 * A);
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = scale * stream.normal();
    return z;
}

std::vector<Vec> sample_increment(const StableNoiseSpec& spec, double dt, std::size_t count, RandomStream& stream)
{
    if (!(dt >= 0.0)) throw Error("stable_noise", "bad_dt", "dt must be nonnegative");
    std::vector<Vec> out(count, Vec(spec.dim()));
    if (dt == 0.0) return out;
    const double scale = std::pow(dt, 1.0 / spec.alpha());
    for (auto& z : out) z = sample_stable_unit(spec, stream) * scale;
    return out;
}

Vec sample_big_jump(const StableNoiseSpec& spec, double delta, RandomStream& stream)
{
    const double r = delta * std::pow(stream.uniform(), -1.0 / spec.alpha());
    return sample_direction(spec.dim(), stream) * r;
}

Vec sample_jump_in_ball(const StableNoiseSpec& spec, const Vec& center, double radius, double delta,
                        RandomStream& stream)
{
    const double alpha = spec.alpha();
    const int d = spec.dim();
    if (d == 1) {
        const double a = center[0] - radius, b = center[0] + radius;
        const double p1 = std::max(a, delta), n1 = std::max(-b, delta);
        const double mp = b > p1 ? spec.shell_measure(p1, b) : 0.0;
        const double mn = -a > n1 ? spec.shell_measure(n1, -a) : 0.0;
        if (mp + mn <= 0.0) throw Error("stable_noise", "empty_target", "target ball carries no jump mass");
        const bool positive = stream.uniform() * (mp + mn) < mp;
        const double r1 = positive ? p1 : n1, r2 = positive ? b : -a;
        const double lo = std::pow(r1, -alpha), hi = std::pow(r2, -alpha);
        const double r = std::pow(lo - stream.uniform() * (lo - hi), -1.0 / alpha);
        Vec z(1);
        z[0] = positive ? r : -r;
        return z;
    }
    const double cn = center.norm();
    const double r_min = std::max(delta, cn - radius);
    if (cn + radius <= delta) throw Error("stable_noise", "empty_target", "target ball carries no jump mass");
    for (int attempt = 0; attempt < 10000000; ++attempt) {
        Vec z = center + sample_direction(d, stream) * (radius * std::pow(stream.uniform(), 1.0 / d));
        const double r = z.norm();
        if (r <= delta) continue;
        if (stream.uniform() <= std::pow(r_min / r, d + alpha)) return z;
    }
    throw Error("stable_noise", "rejection_failed", "rejection sampler did not accept");
}

SmallJumpSampler::SmallJumpSampler(const StableNoiseSpec& spec, double delta, double cutoff_ratio)
    : dim_(spec.dim()), alpha_(spec.alpha()), delta_(delta), eps0_(cutoff_ratio * delta)
{
    if (!(delta > 0.0 && delta <= 1.0)) throw Error("stable_noise", "bad_delta", "delta must lie in (0, 1]");
    if (!(cutoff_ratio > 0.0 && cutoff_ratio < 1.0)) {
        throw Error("stable_noise", "bad_cutoff", "cutoff ratio must lie in (0, 1)");
    }
    jump_rate_ = spec.shell_measure(eps0_, delta_);
    gauss_sd_per_unit_ = std::sqrt(spec.small_second_moment(eps0_) / dim_);
    m2_total_ = spec.small_second_moment(delta_);
    a_lo_ = std::pow(eps0_, -alpha_);
    a_span_ = a_lo_ - std::pow(delta_, -alpha_);
}

Vec SmallJumpSampler::increment(double dt, RandomStream& stream) const
{
    Vec z(dim_);
    if (dt <= 0.0) return z;
    const double sd = gauss_sd_per_unit_ * std::sqrt(dt);
    for (int i = 0; i < dim_; ++i) z[i] = sd * stream.normal();
    double clock = stream.exponential() / jump_rate_;
    while (clock < dt) {
        const double r = std::pow(a_lo_ - stream.uniform() * a_span_, -1.0 / alpha_);
        z += sample_direction(dim_, stream) * r;
        clock += stream.exponential() / jump_rate_;
    }
    return z;
}

Decomposition decompose(const StableNoiseSpec& spec, double delta, double horizon, RandomStream& stream)
{
    if (!(delta > 0.0 && delta <= 1.0)) throw Error("stable_noise", "bad_delta", "delta must lie in (0, 1]");
    if (!(horizon > 0.0)) throw Error("stable_noise", "bad_horizon", "horizon must be positive");
    JumpDecomposition j;
    j.threshold = delta;
    j.big_rate = spec.big_rate(delta);
    j.small_rate_second_moment = spec.small_second_moment(delta);
    // Symmetric measure: the compensator over delta < |z| <= 1 vanishes.
    j.compensator = Vec(spec.dim());
    double t = stream.exponential() / j.big_rate;
    while (t <= horizon) {
        j.big_jumps.push_back({t, sample_big_jump(spec, delta, stream)});
        t += stream.exponential() / j.big_rate;
    }
    return {std::move(j), SmallJumpSampler(spec, delta)};
}

namespace {

std::vector<TailEstimate> tail_from_sups(const std::vector<double>& sups, const std::vector<double>& thresholds)
{
    std::vector<TailEstimate> out;
    out.reserve(thresholds.size());
    for (double th : thresholds) {
        std::size_t k = 0;
        for (double s : sups) k += s > th ? 1 : 0;
        TailEstimate e;
        e.threshold = th;
        e.samples = sups.size();
        e.estimate = sups.empty() ? 0.0 : static_cast<double>(k) / static_cast<double>(sups.size());
        e.ci = wilson_interval(k, sups.size());
        out.push_back(e);
    }
    return out;
}

}  // namespace

std::vector<TailEstimate> sup_process_tail(const StableNoiseSpec& spec, double t, const std::vector<double>& thresholds,
                                           const TailOptions& options, const StreamKey& key)
{
    if (!(t > 0.0)) throw Error("stable_noise", "bad_horizon", "t must be positive");
    std::vector<double> sups(options.paths);
    const double h = t / options.substeps;
    parallel_for(options.paths, options.threads, [&](std::size_t i) {
        RandomStream rs = key.stream(i);
        Decomposition dec = decompose(spec, spec.delta_default(), t, rs);
        Vec L(spec.dim());
        double s = 0.0, now = 0.0;
        std::size_t next_jump = 0;
        const auto& jumps = dec.jumps.big_jumps;
        for (int k = 1; k <= options.substeps; ++k) {
            const double grid_t = k * h;
            while (next_jump < jumps.size() && jumps[next_jump].time <= grid_t) {
                L += dec.small.increment(jumps[next_jump].time - now, rs);
                s = std::max(s, L.norm());
                L += jumps[next_jump].size;
                s = std::max(s, L.norm());
                now = jumps[next_jump].time;
                ++next_jump;
            }
            L += dec.small.increment(grid_t - now, rs);
            now = grid_t;
            s = std::max(s, L.norm());
        }
        sups[i] = s;
    });
    return tail_from_sups(sups, thresholds);
}

std::vector<TailEstimate> small_component_sup_tail(const StableNoiseSpec& spec, double delta, double t,
                                                   const std::vector<double>& thresholds, const TailOptions& options,
                                                   const StreamKey& key)
{
    if (!(t > 0.0)) throw Error("stable_noise", "bad_horizon", "t must be positive");
    SmallJumpSampler small(spec, delta);
    std::vector<double> sups(options.paths);
    const double h = t / options.substeps;
    parallel_for(options.paths, options.threads, [&](std::size_t i) {
        RandomStream rs = key.stream(i);
        Vec L(spec.dim());
        double s = 0.0;
        for (int k = 0; k < options.substeps; ++k) {
            L += small.increment(h, rs);
            s = std::max(s, L.norm());
        }
        sups[i] = s;
    });
    return tail_from_sups(sups, thresholds);
}

}  // namespace kinlevy
