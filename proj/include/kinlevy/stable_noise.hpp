#pragma once

#include <cstddef>
#include <vector>

#include "kinlevy/rng.hpp"
#include "kinlevy/stats.hpp"
#include "kinlevy/types.hpp"

namespace kinlevy {

/// Rotationally invariant alpha-stable noise in R^d with characteristic
/// exponent |xi|^alpha and Levy measure c_{alpha,d} |z|^{-d-alpha} dz.
class StableNoiseSpec {
public:
    StableNoiseSpec(double alpha, int dim, double delta_default = 0.1);

    double alpha() const noexcept { return alpha_; }
    int dim() const noexcept { return dim_; }
    double delta_default() const noexcept { return delta_default_; }
    /// Levy density constant, obtained at construction from the CF identity.
    double c_alpha_d() const noexcept { return c_; }
    /// Surface area of the unit sphere S^{d-1} (2 for d = 1).
    double sphere_area() const noexcept { return sphere_area_; }

    /// nu({|z| > delta}).
    double big_rate(double delta) const;
    /// int_{|z| <= delta} |z|^2 nu(dz).
    double small_second_moment(double delta) const;
    /// nu({r1 < |z| <= r2}).
    double shell_measure(double r1, double r2) const;
    /// nu(B(center, radius) minus the closed ball of radius delta).
    double ball_measure(const Vec& center, double radius, double delta) const;

private:
    double alpha_;
    int dim_;
    double delta_default_;
    double sphere_area_;
    double c_;
};

/// Integral of (1 - cos z_1) |z|^{-d-alpha} over R^d, computed by radial
/// quadrature. Its reciprocal is the Levy constant.
double cos_moment_integral(double alpha, int dim);

/// c |z|^{-d-alpha}; throws for z = 0.
double levy_density(const StableNoiseSpec& spec, const Vec& z);

/// One draw of L_1.
Vec sample_stable_unit(const StableNoiseSpec& spec, RandomStream& stream);
/// `count` i.i.d. draws of L_dt (scaled unit draws).
std::vector<Vec> sample_increment(const StableNoiseSpec& spec, double dt, std::size_t count, RandomStream& stream);

/// Uniform direction on S^{d-1}.
Vec sample_direction(int dim, RandomStream& stream);
/// Draw from nu restricted to {|z| > delta}, normalized.
Vec sample_big_jump(const StableNoiseSpec& spec, double delta, RandomStream& stream);
/// Draw from nu restricted to B(center, radius) minus B(0, delta), normalized.
/// Throws if that set has zero measure.
Vec sample_jump_in_ball(const StableNoiseSpec& spec, const Vec& center, double radius, double delta,
                        RandomStream& stream);

struct BigJump {
    double time = 0.0;
    Vec size;
};

struct JumpDecomposition {
    double threshold = 0.0;
    std::vector<BigJump> big_jumps;
    double small_rate_second_moment = 0.0;
    double big_rate = 0.0;
    Vec compensator;
};

/// Increment sampler for the small-jump martingale L^-(delta).
///
/// Jumps with size in (eps0, delta] are drawn exactly as a compound Poisson
/// sum; the jumps below eps0 are replaced by a Gaussian with the same
/// covariance. eps0 = ratio * delta.
class SmallJumpSampler {
public:
    SmallJumpSampler(const StableNoiseSpec& spec, double delta, double cutoff_ratio = 0.1);

    Vec increment(double dt, RandomStream& stream) const;
    /// Variance per unit time, int_{|z|<=delta} |z|^2 nu(dz).
    double variance_rate() const noexcept { return m2_total_; }
    double delta() const noexcept { return delta_; }

private:
    int dim_;
    double alpha_;
    double delta_;
    double eps0_;
    double jump_rate_;
    double gauss_sd_per_unit_;
    double m2_total_;
    double a_lo_, a_span_;
};

struct Decomposition {
    JumpDecomposition jumps;
    SmallJumpSampler small;
};

/// Realizes the big jumps on [0, horizon] and exposes the small component.
Decomposition decompose(const StableNoiseSpec& spec, double delta, double horizon, RandomStream& stream);

struct TailEstimate {
    double threshold = 0.0;
    double estimate = 0.0;
    Interval ci;
    std::size_t samples = 0;
};

struct TailOptions {
    std::size_t paths = 10000;
    int substeps = 256;
    unsigned threads = 1;
};

/// P[sup_{s<=t} |L_s| > threshold] for each threshold, on shared paths
/// (jump-adapted grid: every big jump plus `substeps` regular points).
std::vector<TailEstimate> sup_process_tail(const StableNoiseSpec& spec, double t, const std::vector<double>& thresholds,
                                           const TailOptions& options, const StreamKey& key);

/// Same tail for the small-jump martingale L^-(delta) alone.
std::vector<TailEstimate> small_component_sup_tail(const StableNoiseSpec& spec, double delta, double t,
                                                   const std::vector<double>& thresholds, const TailOptions& options,
                                                   const StreamKey& key);

}  // namespace kinlevy
