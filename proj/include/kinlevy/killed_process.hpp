#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "kinlevy/domain.hpp"
#include "kinlevy/integrator.hpp"
#include "kinlevy/phase_grid.hpp"
#include "kinlevy/stats.hpp"

namespace kinlevy {

inline constexpr double kCensored = std::numeric_limits<double>::infinity();

struct McOptions {
    std::size_t paths = 1000;
    double step = 0.01;
    unsigned threads = 1;
    double truncation_radius = 1e3;
    /// Bisection tolerance for crossing times.
    double boundary_refine = 1e-10;
};

struct ExitRecord {
    bool exited = false;
    double sigma = kCensored;  // +inf when censored
    double horizon = 0.0;
    State exit_state;
};

/// First exit of a recorded path from O x R^d. The first grid interval with
/// an O -> O^c transition is refined by bisection on the linear interpolant.
ExitRecord exit_time(const PathRecord& path, const Domain& domain, double tol = 1e-10);

/// Start-point generator for path i (uses the path's own stream).
using StartSampler = std::function<State(std::size_t index, RandomStream& stream)>;
StartSampler fixed_start(const State& x0);

struct KilledPath {
    double sigma = kCensored;
    State exit_state;
    /// State at each record time (meaningful while the time is < sigma).
    std::vector<State> at;
    /// Running noise supremum S_t at each record time.
    std::vector<double> noise_sup;
    bool truncated = false;
    bool exploded = false;
};

/// Simulates killed paths with the exact-increment scheme and records their
/// states at `record_times` (sorted, > 0). A path stops at its exit time.
std::vector<KilledPath> run_killed_paths(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                                         const StartSampler& start, const std::vector<double>& record_times,
                                         const McOptions& options, const StreamKey& key);

/// Advances one killed path in place from time 0 to `horizon`. Returns the
/// exit time (kCensored if the path survives). Shared by the estimators.
double advance_killed(const KineticStepper& stepper, const StableNoiseSpec& spec, const Domain& domain, State& s,
                      double horizon, double step, RandomStream& rs, double tol, bool& truncated);

struct SurvivalPoint {
    double t = 0.0;
    double estimate = 0.0;
    Interval ci;
    std::size_t survivors = 0;
    std::size_t samples = 0;
};

std::vector<SurvivalPoint> survival_curve(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                                          const State& x0, const std::vector<double>& t_grid, const McOptions& options,
                                          const StreamKey& key);

/// Survival points from precomputed exit times (shared-path evaluation).
std::vector<SurvivalPoint> survival_from_exits(const std::vector<double>& sigma, const std::vector<double>& t_grid);

struct KilledEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

using PhaseFunction = std::function<double(const State&)>;

/// Estimate of P_t^D f(x0) = E[f(X_t) 1{t < sigma}]; |f| <= bound is enforced.
KilledEstimate killed_expectation(const PhaseFunction& f, double bound, const DriftModel& model,
                                  const StableNoiseSpec& spec, const Domain& domain, const State& x0, double t,
                                  const McOptions& options, const StreamKey& key);

struct EscapeRow {
    double R = 0.0;
    double estimate = 0.0;  // sup over starts
    Interval ci;            // Wilson interval of the maximizing start
    std::size_t samples = 0;
    std::size_t argmax_start = 0;
    double threshold_small_v = 0.0;  // noise level needed when |v0| <= sqrt(R)
    double threshold_large_v = 0.0;  // noise level needed when |v0| >= sqrt(R)
    double noise_bound = 0.0;        // sup over starts of P[S_t >= regime threshold]
};

struct EscapeTable {
    double t = 0.0;
    double C = 0.0;
    double g = 0.0;          // g(t) = 2t - (e^{Ct} - 1)/C
    bool applicable = true;  // g(t) > 0
    std::vector<EscapeRow> rows;
    std::vector<double> survival;  // per start
};

double escape_g(double t, double C) noexcept;

/// sup over starts of P_x[x_s in O for all s <= t, |v_t| > R] for each R.
EscapeTable velocity_escape(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                            const std::vector<State>& starts, double t, const std::vector<double>& R_grid, double C,
                            const McOptions& options, const StreamKey& key);

struct MarginalEstimate {
    PhaseHistogram histogram;  // fractions (sum with outside is 1)
    std::vector<double> density;
    double escaped_fraction = 0.0;
    double lp_norm = 0.0;
    double p_prime = 2.0;
    bool widen_warning = false;  // fewer than 99% of samples inside the grid
    double max_cell_mass = 0.0;
    std::size_t argmax_cell = 0;
};

/// Histogram density of X_t (no killing) on `grid` and its discrete L^{p'} norm.
MarginalEstimate empirical_marginal(const DriftModel& model, const StableNoiseSpec& spec, const State& x0, double t,
                                    const PhaseGrid& grid, double p_prime, const McOptions& options,
                                    const StreamKey& key);

}  // namespace kinlevy
