#include "kinlevy/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "kinlevy/parallel.hpp"

namespace kinlevy {

KineticStepper::KineticStepper(const DriftModel& model, double truncation_radius, double explosion_threshold)
    : model_(&model), radius2_(truncation_radius * truncation_radius), explosion_(explosion_threshold)
{
}

bool KineticStepper::advance(State& s, double h, const Vec& dL, bool& truncated) const
{
    const double r2 = s.x.norm2() + s.v.norm2();
    Vec v_new = s.v + dL;
    if (r2 <= radius2_) {
        v_new += model_->eval(s.x, s.v) * h;
    } else {
        truncated = true;
    }
    s.x += (s.v + v_new) * (0.5 * h);
    s.v = v_new;
    for (int i = 0; i < s.x.dim(); ++i) {
        if (!(std::abs(s.x[i]) <= explosion_) || !(std::abs(s.v[i]) <= explosion_)) return false;
    }
    return true;
}

std::vector<double> merged_time_grid(double horizon, double step, const std::vector<double>& extra)
{
    std::vector<double> grid;
    const auto n = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
    grid.reserve(n + 1 + extra.size());
    for (std::size_t k = 0; k < n; ++k) grid.push_back(static_cast<double>(k) * step);
    grid.push_back(horizon);
    for (double t : extra) {
        if (t >= 0 && t <= horizon) grid.push_back(t);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12; }),
               grid.end());
    return grid;
}

namespace {

void validate(const SimulationOptions& o, const State& initial, const StableNoiseSpec& spec, const DriftModel& model)
{
    if (!(o.step > 0)) throw Error("integrator", "bad_step", "step must be positive");
    if (!(o.horizon >= 0)) throw Error("integrator", "bad_horizon", "horizon must be nonnegative");
    if (initial.x.dim() != spec.dim() || initial.v.dim() != spec.dim() || model.dim != spec.dim()) {
        throw Error("integrator", "dimension_mismatch", "state, noise and drift dimensions differ");
    }
}

}  // namespace

PathRecord simulate_path(const DriftModel& model, const StableNoiseSpec& spec, const State& initial,
                         const SimulationOptions& options, const StreamKey& key, std::uint64_t index)
{
    validate(options, initial, spec, model);
    PathRecord rec;
    rec.index = index;
    const int d = spec.dim();
    auto push = [&](double t, const State& s, bool jumped, const Vec& size, double sup) {
        rec.times.push_back(t);
        rec.states.push_back(s);
        rec.jump.push_back(jumped ? 1 : 0);
        rec.jump_size.push_back(size);
        rec.noise_sup.push_back(sup);
    };
    const Vec zero(d);
    push(0.0, initial, false, zero, 0.0);
    if (options.horizon == 0.0) return rec;

    RandomStream rs = key.stream(index);
    KineticStepper stepper(model, options.truncation_radius, options.explosion_threshold);
    State s = initial;
    Vec L(d);
    double sup = 0.0;

    std::vector<BigJump> jumps;
    std::optional<SmallJumpSampler> small;
    if (options.noise == NoiseMode::Decomposed) {
        Decomposition dec = decompose(spec, options.delta, options.horizon, rs);
        jumps = std::move(dec.jumps.big_jumps);
        small.emplace(dec.small);
    }
    std::vector<double> jump_times;
    for (const auto& j : jumps) jump_times.push_back(j.time);
    const std::vector<double> grid = merged_time_grid(options.horizon, options.step, jump_times);
    const double inv_alpha = 1.0 / spec.alpha();
    std::size_t next_jump = 0;

    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double h = grid[k] - grid[k - 1];
        Vec dL(d);
        if (options.noise == NoiseMode::Exact) {
            dL = sample_stable_unit(spec, rs) * std::pow(h, inv_alpha);
        } else if (options.noise == NoiseMode::Decomposed) {
            dL = small->increment(h, rs);
        }
        if (!stepper.advance(s, h, dL, rec.truncation_hit)) {
            rec.exploded = true;
            rec.explosion_time = grid[k];
            return rec;
        }
        L += dL;
        sup = std::max(sup, L.norm());
        push(grid[k], s, false, zero, sup);
        if (next_jump < jumps.size() && std::abs(jumps[next_jump].time - grid[k]) <= 1e-12) {
            const Vec& z = jumps[next_jump].size;
            s.v = s.v + z;
            L += z;
            sup = std::max(sup, L.norm());
            push(grid[k], s, true, z, sup);
            ++next_jump;
        }
    }
    return rec;
}

TrajectoryBatch simulate(const DriftModel& model, const StableNoiseSpec& spec, const State& initial,
                         const SimulationOptions& options, const StreamKey& key)
{
    validate(options, initial, spec, model);
    TrajectoryBatch batch;
    batch.seed = key.seed;
    batch.tag = key.tag;
    batch.paths.resize(options.paths);
    parallel_for(options.paths, options.threads,
                 [&](std::size_t i) { batch.paths[i] = simulate_path(model, spec, initial, options, key, i); });
    return batch;
}

std::vector<EnvelopeCheck> gronwall_envelope(const TrajectoryBatch& batch, double C)
{
    if (!(C >= 0)) throw Error("integrator", "bad_constant", "growth constant must be nonnegative");
    std::vector<EnvelopeCheck> out;
    out.reserve(batch.paths.size());
    for (const auto& p : batch.paths) {
        EnvelopeCheck chk;
        chk.margin = std::numeric_limits<double>::infinity();
        if (p.states.empty()) {
            out.push_back(chk);
            continue;
        }
        const double n0 = p.states[0].x.norm() + p.states[0].v.norm();
        double sup = 0.0;
        for (std::size_t i = 0; i < p.states.size(); ++i) {
            const double t = p.times[i];
            sup = std::max(sup, p.states[i].x.norm() + p.states[i].v.norm());
            const double bound = (n0 + C * t + p.noise_sup[i]) * std::exp((C + 1.0) * t);
            chk.margin = std::min(chk.margin, bound - sup);
        }
        chk.holds = chk.margin >= 0.0;
        out.push_back(chk);
    }
    return out;
}

DisplacementTable displacement_probe(const DriftModel& model, const StableNoiseSpec& spec, const State& box_lo,
                                     const State& box_hi, double eps, const std::vector<double>& t_grid,
                                     const ProbeOptions& options, const StreamKey& key)
{
    if (!(eps > 0)) throw Error("integrator", "bad_eps", "epsilon must be positive");
    const int d = spec.dim();
    DisplacementTable table;
    // 3^{2d} lattice: every coordinate at lo, mid or hi.
    const int axes = 2 * d;
    int count = 1;
    for (int a = 0; a < axes; ++a) count *= 3;
    for (int c = 0; c < count; ++c) {
        State s{Vec(d), Vec(d)};
        int code = c;
        for (int a = 0; a < axes; ++a) {
            const int level = code % 3;
            code /= 3;
            const double lo = a < d ? box_lo.x[a] : box_lo.v[a - d];
            const double hi = a < d ? box_hi.x[a] : box_hi.v[a - d];
            const double val = level == 0 ? lo : (level == 1 ? 0.5 * (lo + hi) : hi);
            (a < d ? s.x[a] : s.v[a - d]) = val;
        }
        table.starts.push_back(s);
    }

    std::vector<double> times = t_grid;
    std::sort(times.begin(), times.end());
    const double horizon = times.empty() ? 0.0 : times.back();
    const std::size_t nt = times.size();
    // exceed[start][t]
    std::vector<std::vector<double>> prob(table.starts.size(), std::vector<double>(nt, 0.0));
    KineticStepper stepper(model);
    const double inv_alpha = 1.0 / spec.alpha();
    for (std::size_t si = 0; si < table.starts.size(); ++si) {
        const State x0 = table.starts[si];
        std::vector<std::uint8_t> hits(options.paths * nt, 0);
        const StreamKey sk = key.child("start").child(std::to_string(si));
        const std::vector<double> grid = merged_time_grid(horizon, options.step, times);
        parallel_for(options.paths, options.threads, [&](std::size_t i) {
            RandomStream rs = sk.stream(i);
            State s = x0;
            bool trunc = false;
            std::size_t ti = 0;
            while (ti < nt && times[ti] <= 0.0) ++ti;
            for (std::size_t k = 1; k < grid.size() && ti < nt; ++k) {
                const double h = grid[k] - grid[k - 1];
                const Vec dL = sample_stable_unit(spec, rs) * std::pow(h, inv_alpha);
                if (!stepper.advance(s, h, dL, trunc)) {
                    for (; ti < nt; ++ti) hits[i * nt + ti] = 1;
                    break;
                }
                while (ti < nt && std::abs(times[ti] - grid[k]) <= 1e-12) {
                    const double disp = std::sqrt((s.x - x0.x).norm2() + (s.v - x0.v).norm2());
                    hits[i * nt + ti] = disp > eps ? 1 : 0;
                    ++ti;
                }
            }
        });
        for (std::size_t ti = 0; ti < nt; ++ti) {
            std::size_t c = 0;
            for (std::size_t i = 0; i < options.paths; ++i) c += hits[i * nt + ti];
            prob[si][ti] = static_cast<double>(c) / static_cast<double>(options.paths);
        }
    }
    std::vector<double> ratios;
    for (std::size_t ti = 0; ti < nt; ++ti) {
        DisplacementRow row;
        row.t = times[ti];
        for (std::size_t si = 0; si < table.starts.size(); ++si) {
            if (prob[si][ti] > row.probability || si == 0) {
                row.probability = prob[si][ti];
                row.argmax_start = si;
            }
        }
        if (row.t > 0 && row.t <= options.small_t) ratios.push_back(row.probability / row.t);
        table.rows.push_back(row);
    }
    // Upper envelope fitted on the first half of the small-t points.
    const std::size_t half = (ratios.size() + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) table.slope = std::max(table.slope, ratios[i]);
    for (const auto& row : table.rows) {
        if (row.t <= options.small_t && row.probability > 1.2 * table.slope * row.t + 1e-15) {
            table.linear_envelope_holds = false;
        }
    }
    return table;
}

}  // namespace kinlevy
