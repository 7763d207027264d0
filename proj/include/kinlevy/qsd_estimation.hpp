#pragma once

#include <cstddef>
#include <vector>

#include "kinlevy/killed_process.hpp"
#include "kinlevy/phase_grid.hpp"

namespace kinlevy {

struct ResampleEvent {
    double time = 0.0;
    std::size_t killed = 0;
    std::size_t donor = 0;
};

struct FlemingViotOptions {
    std::size_t particles = 5000;
    double horizon = 50.0;
    double step = 0.01;
    double burn_in_fraction = 0.3;
    /// Accumulate the time average every this many steps.
    std::size_t record_every = 1;
    /// Pool the particle states at this spacing after burn-in (0 disables).
    double snapshot_interval = 1.0;
    unsigned threads = 1;
    double truncation_radius = 1e3;
};

struct ParticleEnsemble {
    std::vector<State> states;
    double time = 0.0;
    std::vector<ResampleEvent> resample_log;
};

struct FlemingViotResult {
    ParticleEnsemble ensemble;
    /// Time-averaged empirical measure after burn-in (fractions, sum with outside = 1).
    PhaseHistogram histogram;
    /// Pooled post-burn-in particle states (draws from the stationary measure).
    std::vector<State> snapshots;
    std::size_t resamples_after_burn_in = 0;
    double burn_in = 0.0;
    /// Resample events per particle per unit time after burn-in.
    double resample_rate = 0.0;
    std::size_t records = 0;
};

/// Fleming-Viot particle system on D. A killed particle restarts at the
/// post-step state of a survivor chosen uniformly with its own stream.
FlemingViotResult fleming_viot(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                               const std::vector<State>& initial, const PhaseGrid& grid,
                               const FlemingViotOptions& options, const StreamKey& key);

struct ConditionedLaw {
    PhaseHistogram histogram;  // fractions over survivors
    std::vector<Interval> cell_ci;
    std::size_t survivors = 0;
    std::size_t samples = 0;
    double survival = 0.0;
    std::vector<State> survivor_states;
};

/// Law of X_t given t < sigma_D from a fixed start (or from a sampler).
ConditionedLaw conditioned_law(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                               const State& x0, double t, const PhaseGrid& grid, const McOptions& options,
                               const StreamKey& key);
ConditionedLaw conditioned_law(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                               const StartSampler& start, double t, const PhaseGrid& grid, const McOptions& options,
                               const StreamKey& key);

struct FitWindow {
    double t_lo = 0.0;
    double t_hi = 0.0;
};

struct LambdaFit {
    double lambda = 0.0;
    double std_error = 0.0;
    double r_squared = 0.0;
    FitWindow window;
};

struct LambdaEstimate {
    double lambda = 0.0;
    Interval ci;
    double std_error = 0.0;
    std::vector<LambdaFit> per_start;
    bool start_independent = true;
    FitWindow window;
};

/// Slope fit of -log S over a window. Without an explicit window the
/// earliest window with R^2 >= 0.99, >= 100 survivors at its end and a slope
/// agreeing between its front and back halves within 2 SE is used.
LambdaFit fit_lambda(const std::vector<SurvivalPoint>& curve, const FitWindow* window = nullptr,
                     double min_r_squared = 0.99);

/// Pooled killing rate from survival curves of at least two starts. Without
/// a window, all starts are fitted on the overlap of their automatic windows.
LambdaEstimate estimate_lambda(const std::vector<std::vector<SurvivalPoint>>& curves,
                               const FitWindow* window = nullptr);

struct PhiEstimate {
    std::vector<double> phi;  // per cell, NaN where unresolved
    std::vector<std::size_t> survivors;
    std::vector<char> adequate;
    std::size_t min_survivors = 100;
    double t = 0.0;
};

/// phi(x) proportional to e^{lambda t} S_x(t) at cell centers, normalized so
/// that sum_cells mu(cell) phi(cell) = 1 over adequately sampled cells.
PhiEstimate estimate_phi(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                         const PhaseGrid& grid, double t, double lambda, const std::vector<double>& mu_cells,
                         const McOptions& options, const StreamKey& key, std::size_t min_survivors = 100);

/// Relative sup-norm change between two phi estimates over cells adequate in both.
double phi_relative_change(const PhiEstimate& a, const PhiEstimate& b);

struct EigenConsistency {
    double tv = 0.0;
    double survival = 0.0;
    PhaseHistogram pushed;
};

/// Pushes samples of mu through the killed dynamics for time s and compares
/// the renormalized survivor histogram with `reference`.
EigenConsistency eigen_consistency(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                                   const std::vector<State>& mu_samples, const PhaseHistogram& reference, double s,
                                   const McOptions& options, const StreamKey& key);

/// Symmetric velocity half-width holding `fraction` of the samples' |v|_inf.
double velocity_quantile(const std::vector<State>& states, double fraction);

}  // namespace kinlevy
