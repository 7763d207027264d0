#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kinlevy/domain.hpp"
#include "kinlevy/drift_models.hpp"
#include "kinlevy/phase_grid.hpp"
#include "kinlevy/rng.hpp"
#include "kinlevy/stable_noise.hpp"

namespace kinlevy {

/// Row-sparse nonnegative square matrix.
struct SparseMatrix {
    std::size_t n = 0;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;

    static SparseMatrix from_dense(const std::vector<std::vector<double>>& dense);
    std::vector<double> multiply(const std::vector<double>& x) const;       // K x
    std::vector<double> left_multiply(const std::vector<double>& x) const;  // x K
    double row_sum(std::size_t i) const;
};

struct UlamOptions {
    double V = 8.0;
    int x_cells = 24;
    int v_cells = 24;
    double dt = 0.25;
    std::size_t samples_per_cell = 2000;
    double step = 0.01;
    unsigned threads = 1;
    double truncation_radius = 1e3;
};

struct UlamOperator {
    PhaseGrid grid;
    SparseMatrix K;
    double dt = 0.0;
    std::size_t samples_per_cell = 0;
    std::vector<double> kill_mass;        // per row
    std::vector<double> truncation_mass;  // per row, left the velocity box alive
    std::vector<std::string> warnings;

    double escape_mass(std::size_t i) const { return kill_mass[i] + truncation_mass[i]; }
};

/// Ulam matrix of the killed semigroup at time dt on O x [-V, V]^d.
UlamOperator build_ulam(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                        const UlamOptions& options, const StreamKey& key);

struct SpectralEstimate {
    double rho = 0.0;
    double lambda_ulam = 0.0;
    std::vector<double> right_vec;
    std::vector<double> left_vec;
    /// Moduli of the leading Ritz values, largest first (includes rho).
    std::vector<double> moduli;
    bool complex_pair = false;
    std::size_t iterations = 0;
    std::size_t recurrent_block_size = 0;
};

/// Leading eigen-triple by power iteration; subdominant moduli by subspace
/// iteration with a Rayleigh-Ritz step. `dt` converts rho into a rate.
SpectralEstimate eigen_triple(const SparseMatrix& K, double dt = 1.0, double tol = 1e-10,
                              std::size_t max_iter = 100000, std::size_t subspace = 6);

struct BandRow {
    double R = 0.0;
    double mass = 0.0;  // row-average transition mass into cells with |v| >= R
};

struct CompactnessReport {
    std::vector<double> moduli;
    std::vector<BandRow> bands;
    bool moduli_decreasing = true;
    bool bands_nonincreasing = true;
};

CompactnessReport compactness_diagnostic(const UlamOperator& op, const SpectralEstimate& est);

/// Smooth compactly supported test function on phase space with bounds on
/// its partial derivatives.
struct TestFunction {
    std::function<double(const State&)> value;
    double grad_x_bound = 0.0;
    double grad_v_bound = 0.0;
};

/// Product bump psi((x - cx)/rx) psi((v - cv)/rv), psi(s) = exp(1 - 1/(1 - |s|^2)).
TestFunction bump_function(const State& center, double rx, double rv);

struct DuhamelOptions {
    std::size_t paths = 100000;
    double step = 1e-3;
    int s_points = 41;
    /// Richardson step on the trapezoid sums (needs an even interval count).
    bool romberg = true;
    double fd_step = 1e-2;
    /// Central-difference order, 2 or 4.
    int fd_order = 4;
    /// Target for the omitted tail near s = t.
    double tail_tol = 1e-4;
    double drift_cap = 0.5;
    /// Extrapolate out the first-order Euler bias with a coupled h / 2 path.
    bool richardson = true;
    /// Estimate the excluded window from the integrand at t - eta.
    bool tail_rectangle = true;
    unsigned threads = 1;
};

struct DuhamelResult {
    double lhs = 0.0;             // E f(X_t)
    double semigroup_term = 0.0;  // driftless P_t f(x0)
    double correction = 0.0;      // time integral of B . grad_v P_{t-s} f
    double correction_se = 0.0;
    double residual = 0.0;
    double residual_se = 0.0;
    double eta = 0.0;
    double omitted_tail_bound = 0.0;
    bool within_3se = false;
    bool inconclusive = false;
};

/// Residual of the perturbative (Duhamel) formula with common random numbers:
/// each path drives X, the driftless process and the inner expectations
/// with the same stable increments.
DuhamelResult duhamel_residual(const DriftModel& model, const StableNoiseSpec& spec, const TestFunction& f,
                               const State& x0, double t, const DuhamelOptions& options, const StreamKey& key);

}  // namespace kinlevy
