#pragma once

#include <cstdint>
#include <vector>

#include "kinlevy/drift_models.hpp"
#include "kinlevy/rng.hpp"
#include "kinlevy/stable_noise.hpp"

namespace kinlevy {

enum class NoiseMode {
    Exact,       // exact stable increments per step (default)
    Decomposed,  // big jumps inserted into the grid, small part sampled separately
    Disabled,    // deterministic flow
};

/// One step of the scheme: drift frozen at the left endpoint (truncated to
/// zero outside the phase ball of radius R), velocity increment B h + dL and
/// trapezoidal position update x += h (v_old + v_new) / 2.
class KineticStepper {
public:
    KineticStepper(const DriftModel& model, double truncation_radius = 1e3, double explosion_threshold = 1e12);

    /// Advances `s` by h. Sets `truncated` when the drift was switched off by
    /// the truncation radius. Returns false when a coordinate exceeds the
    /// explosion threshold or becomes non-finite.
    bool advance(State& s, double h, const Vec& dL, bool& truncated) const;

    const DriftModel& model() const noexcept { return *model_; }

private:
    const DriftModel* model_;
    double radius2_;
    double explosion_;
};

struct SimulationOptions {
    double horizon = 1.0;
    double step = 0.01;
    std::size_t paths = 1;
    NoiseMode noise = NoiseMode::Exact;
    /// Jump threshold in decomposition mode.
    double delta = 0.1;
    double truncation_radius = 1e3;
    double explosion_threshold = 1e12;
    unsigned threads = 1;
};

/// One cadlag path. At a big-jump time two entries share the same time: the
/// pre-jump state and the post-jump state (flagged in `jump`).
struct PathRecord {
    std::uint64_t index = 0;  // seed lineage: (master seed, index)
    std::vector<double> times;
    std::vector<State> states;
    std::vector<std::uint8_t> jump;
    std::vector<Vec> jump_size;  // meaningful where jump[i] != 0
    std::vector<double> noise_sup;  // running S_t
    bool exploded = false;
    double explosion_time = 0.0;
    bool truncation_hit = false;
};

struct TrajectoryBatch {
    std::uint64_t seed = 0;
    std::uint64_t tag = 0;
    std::vector<PathRecord> paths;
};

TrajectoryBatch simulate(const DriftModel& model, const StableNoiseSpec& spec, const State& initial,
                         const SimulationOptions& options, const StreamKey& key);

/// Regenerates path `index` of a batch produced with the same arguments.
PathRecord simulate_path(const DriftModel& model, const StableNoiseSpec& spec, const State& initial,
                         const SimulationOptions& options, const StreamKey& key, std::uint64_t index);

struct EnvelopeCheck {
    bool holds = true;
    double margin = 0.0;  // min over grid times of bound - sup norm
};

/// Pathwise Gronwall envelope for N = |x| + |v|:
///   sup_{s<=t} N_s <= (N_0 + C t + S_t) e^{(C + 1) t}.
/// The extra 1 in the exponent comes from the coupling dx = v dt, so C is
/// the drift's linear-growth constant.
std::vector<EnvelopeCheck> gronwall_envelope(const TrajectoryBatch& batch, double C);

struct DisplacementRow {
    double t = 0.0;
    double probability = 0.0;  // sup over the sampled starts
    std::size_t argmax_start = 0;
};

struct DisplacementTable {
    std::vector<State> starts;
    std::vector<DisplacementRow> rows;
    /// M-hat: max of P(t)/t over the first half of the grid points in (0, small_t].
    double slope = 0.0;
    /// Whether P(t) <= 1.2 * slope * t for all t <= small_t.
    bool linear_envelope_holds = true;
};

struct ProbeOptions {
    std::size_t paths = 10000;
    double step = 0.001;
    double small_t = 0.1;
    unsigned threads = 1;
};

/// sup_{start} P[|X_t - start| > eps] on the 3^{2d} lattice of the box
/// [x_lo, x_hi] x [v_lo, v_hi] (corners, edge midpoints, center).
DisplacementTable displacement_probe(const DriftModel& model, const StableNoiseSpec& spec, const State& box_lo,
                                     const State& box_hi, double eps, const std::vector<double>& t_grid,
                                     const ProbeOptions& options, const StreamKey& key);

/// Merges a regular grid of spacing `step` on [0, horizon] with extra times.
std::vector<double> merged_time_grid(double horizon, double step, const std::vector<double>& extra);

}  // namespace kinlevy
