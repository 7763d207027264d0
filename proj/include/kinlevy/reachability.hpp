#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kinlevy/domain.hpp"
#include "kinlevy/drift_models.hpp"
#include "kinlevy/rng.hpp"
#include "kinlevy/stable_noise.hpp"
#include "kinlevy/stats.hpp"

namespace kinlevy {

enum class WindowKind { Jump, Coast };

struct CascadeWindow {
    WindowKind kind = WindowKind::Coast;
    double t0 = 0.0;
    double t1 = 0.0;
    /// Jump windows: center of the target ball for the jump size. For the
    /// final window this is the skeleton value; the realized target is
    /// v_F minus the velocity just before the jump.
    Vec target;
    double radius = 0.0;
    bool final_correction = false;

    double length() const noexcept { return t1 - t0; }
};

struct GeometrySpec {
    /// Interior candidate waypoints per axis (visibility graph).
    int grid_points = 15;
    /// Required segment clearance is min(factor * eps, 0.999 * endpoint clearance),
    /// and never below eps / 2.
    double clearance_factor = 4.0;
    /// Jump window length as a fraction of the adjacent coasts.
    double rho = 0.05;
    /// Target radius; 0 means eps / 4.
    double beta = 0.0;
    /// Small-jump threshold; 0 means min(1, beta / 2).
    double delta = 0.0;
    /// Step of the deterministic skeleton integration.
    double skeleton_step = 1e-4;
};

struct CascadePlan {
    State x0;
    State xF;
    double epsilon = 0.0;
    double t = 0.0;
    double beta = 0.0;
    double delta = 0.0;
    double rho = 0.0;
    double clearance = 0.0;
    double skeleton_step = 1e-4;
    std::vector<Vec> waypoints;  // y_0 = x0.x, ..., y_{N+1} = xF.x
    std::vector<CascadeWindow> windows;
    /// Growth constant used for the final-window envelope.
    double growth_constant = 0.0;
    /// Skeleton end state and its distances to x_F.
    State skeleton_end;
    double skeleton_position_error = 0.0;
    double skeleton_velocity_error = 0.0;

    std::size_t segments() const noexcept { return waypoints.empty() ? 0 : waypoints.size() - 1; }
};

/// Min over dense samples of boundary_distance along [a, b].
double segment_clearance(const Domain& domain, const Vec& a, const Vec& b, double spacing);

/// Shortest clearance-feasible polyline from a to b (visibility graph).
std::vector<Vec> plan_polyline(const Domain& domain, const Vec& a, const Vec& b, double clearance,
                               const GeometrySpec& geometry);

CascadePlan plan_cascade(const DriftModel& model, const State& x0, const State& xF, double epsilon,
                         const Domain& domain, double t, const GeometrySpec& geometry = {});

/// A plan with a single coast window on [0, t] (no jumps at all).
CascadePlan void_plan(double t, double beta, double delta, int dim);

/// Deterministic forward integration of the plan: jumps at window midpoints
/// with the planned sizes (final jump to v_F), no noise.
struct SkeletonRun {
    State end;
    bool stayed_inside = true;
    std::vector<State> jump_states;  // state just before each jump
};
SkeletonRun execute_skeleton(const DriftModel& model, const CascadePlan& plan, const Domain* domain = nullptr);

struct CascadeProbability {
    /// log of the product of Poisson window factors and target-ball masses.
    double log_big_jump = 0.0;
    double big_jump = 0.0;
    /// Doob L^2 bound on P[sup |L^-| <= beta], clamped at 0.
    double doob_factor = 0.0;
    double log_total = 0.0;  // -inf when the Doob factor is vacuous
    double total = 0.0;
    /// Radius of the set of possible final-window targets.
    double final_center_radius = 0.0;
    std::vector<double> window_log_factors;
};

/// Exact probability of the driving-noise event of the plan (drift ignored),
/// with the final window priced at its worst-case target ball.
CascadeProbability cascade_probability(const CascadePlan& plan, const StableNoiseSpec& spec);

enum class ReachMode { Conditioned, Direct };

struct ReachOptions {
    std::size_t paths = 10000;
    ReachMode mode = ReachMode::Conditioned;
    double step = 1e-3;
    unsigned threads = 1;
    /// Conditioned mode only: false runs the skeleton through the estimator.
    bool noise = true;
    double truncation_radius = 1e3;
};

struct ReachEstimate {
    ReachMode mode = ReachMode::Conditioned;
    double estimate = 0.0;
    Interval ci;
    double log10_estimate = 0.0;
    std::size_t successes = 0;
    std::size_t paths = 0;
    double success_frequency = 0.0;
    /// Conditioned mode: fraction of paths whose small-jump sup stayed <= beta.
    double small_event_frequency = 0.0;
    /// Set when no path succeeded; `estimate` is then an upper bound.
    bool upper_bound_only = false;
};

/// P_{x0}[t < sigma_D, X_t in B(x_F, eps)] by the forced cascade
/// (conditioned) or plain Monte Carlo (direct).
ReachEstimate reach_probability(const DriftModel& model, const StableNoiseSpec& spec, const CascadePlan& plan,
                                const Domain& domain, const ReachOptions& options, const StreamKey& key);

/// The conditioned estimate targets a sub-event, so it must not exceed the
/// direct estimate beyond noise: lower(conditioned) <= upper(direct).
bool modes_consistent(const ReachEstimate& conditioned, const ReachEstimate& direct);

const char* to_string(ReachMode mode) noexcept;

}  // namespace kinlevy
