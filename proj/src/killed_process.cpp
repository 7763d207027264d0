#include "kinlevy/killed_process.hpp"

#include <algorithm>
#include <cmath>

#include "kinlevy/parallel.hpp"

namespace kinlevy {

ExitRecord exit_time(const PathRecord& path, const Domain& domain, double tol)
{
    ExitRecord rec;
    if (path.states.empty()) throw Error("killed_process", "empty_path", "path has no states");
    rec.horizon = path.times.back();
    if (!domain.contains(path.states[0].x)) {
        rec.exited = true;
        rec.sigma = 0.0;
        rec.exit_state = path.states[0];
        return rec;
    }
    for (std::size_t k = 1; k < path.states.size(); ++k) {
        const State& a = path.states[k - 1];
        const State& b = path.states[k];
        const double h = path.times[k] - path.times[k - 1];
        if (domain.contains(b.x)) continue;
        // Jump entries share a time and a position, so h > 0 here.
        const double frac = segment_exit_fraction(domain, a.x, b.x, h > 0 ? tol / h : tol);
        rec.exited = true;
        rec.sigma = path.times[k - 1] + frac * h;
        rec.exit_state = State{a.x + (b.x - a.x) * frac, a.v + (b.v - a.v) * frac};
        return rec;
    }
    if (path.exploded) {
        rec.exited = true;
        rec.sigma = path.explosion_time;
        rec.exit_state = path.states.back();
    }
    return rec;
}

StartSampler fixed_start(const State& x0)
{
    return [x0](std::size_t, RandomStream&) { return x0; };
}

double advance_killed(const KineticStepper& stepper, const StableNoiseSpec& spec, const Domain& domain, State& s,
                      double horizon, double step, RandomStream& rs, double tol, bool& truncated)
{
    const double inv_alpha = 1.0 / spec.alpha();
    const double regular_scale = std::pow(step, inv_alpha);
    double t = 0.0;
    while (t < horizon - 1e-12) {
        const double h = std::min(step, horizon - t);
        const double scale = h == step ? regular_scale : std::pow(h, inv_alpha);
        const State prev = s;
        const Vec dL = sample_stable_unit(spec, rs) * scale;
        if (!stepper.advance(s, h, dL, truncated)) return t + h;
        const double frac = segment_exit_fraction(domain, prev.x, s.x, tol / h);
        if (frac >= 0.0) {
            s = State{prev.x + (s.x - prev.x) * frac, prev.v + (s.v - prev.v) * frac};
            return t + frac * h;
        }
        t += h;
    }
    return kCensored;
}

std::vector<KilledPath> run_killed_paths(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                                         const StartSampler& start, const std::vector<double>& record_times,
                                         const McOptions& options, const StreamKey& key)
{
    if (!(options.step > 0)) throw Error("killed_process", "bad_step", "step must be positive");
    if (!std::is_sorted(record_times.begin(), record_times.end()) ||
        (!record_times.empty() && record_times.front() < 0)) {
        throw Error("killed_process", "bad_times", "record times must be sorted and nonnegative");
    }
    std::vector<KilledPath> out(options.paths);
    const double horizon = record_times.empty() ? 0.0 : record_times.back();
    const std::vector<double> grid = merged_time_grid(horizon, options.step, record_times);
    const double inv_alpha = 1.0 / spec.alpha();
    const double regular_scale = std::pow(options.step, inv_alpha);
    KineticStepper stepper(model, options.truncation_radius);

    parallel_for(options.paths, options.threads, [&](std::size_t i) {
        RandomStream rs = key.stream(i);
        KilledPath& kp = out[i];
        State s = start(i, rs);
        kp.at.assign(record_times.size(), s);
        kp.noise_sup.assign(record_times.size(), 0.0);
        std::size_t ri = 0;
        while (ri < record_times.size() && record_times[ri] <= 0.0) ++ri;
        if (!domain.contains(s.x)) {
            kp.sigma = 0.0;
            kp.exit_state = s;
            return;
        }
        Vec L(spec.dim());
        double sup = 0.0;
        for (std::size_t k = 1; k < grid.size() && ri < record_times.size(); ++k) {
            const double h = grid[k] - grid[k - 1];
            const double scale = std::abs(h - options.step) < 1e-15 ? regular_scale : std::pow(h, inv_alpha);
            const State prev = s;
            const Vec dL = sample_stable_unit(spec, rs) * scale;
            if (!stepper.advance(s, h, dL, kp.truncated)) {
                kp.exploded = true;
                kp.sigma = grid[k];
                kp.exit_state = s;
                return;
            }
            L += dL;
            sup = std::max(sup, L.norm());
            const double frac = segment_exit_fraction(domain, prev.x, s.x, options.boundary_refine / h);
            if (frac >= 0.0) {
                kp.sigma = grid[k - 1] + frac * h;
                kp.exit_state = State{prev.x + (s.x - prev.x) * frac, prev.v + (s.v - prev.v) * frac};
                return;
            }
            while (ri < record_times.size() && std::abs(record_times[ri] - grid[k]) <= 1e-12) {
                kp.at[ri] = s;
                kp.noise_sup[ri] = sup;
                ++ri;
            }
        }
    });
    return out;
}

std::vector<SurvivalPoint> survival_from_exits(const std::vector<double>& sigma, const std::vector<double>& t_grid)
{
    std::vector<SurvivalPoint> out;
    for (double t : t_grid) {
        SurvivalPoint p;
        p.t = t;
        p.samples = sigma.size();
        for (double s : sigma) p.survivors += s > t ? 1 : 0;
        p.estimate = sigma.empty() ? 0.0 : static_cast<double>(p.survivors) / static_cast<double>(sigma.size());
        p.ci = wilson_interval(p.survivors, sigma.size());
        out.push_back(p);
    }
    return out;
}

std::vector<SurvivalPoint> survival_curve(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                                          const State& x0, const std::vector<double>& t_grid, const McOptions& options,
                                          const StreamKey& key)
{
    if (options.paths < 100) throw Error("killed_process", "too_few_paths", "survival curve needs M >= 100");
    std::vector<double> times = t_grid;
    std::sort(times.begin(), times.end());
    const double horizon = times.empty() ? 0.0 : times.back();
    const auto paths = run_killed_paths(model, spec, domain, fixed_start(x0), {horizon}, options, key);
    std::vector<double> sigma(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) sigma[i] = paths[i].sigma;
    return survival_from_exits(sigma, t_grid);
}

KilledEstimate killed_expectation(const PhaseFunction& f, double bound, const DriftModel& model,
                                  const StableNoiseSpec& spec, const Domain& domain, const State& x0, double t,
                                  const McOptions& options, const StreamKey& key)
{
    std::vector<double> values(options.paths, 0.0);
    if (t == 0.0) {
        const double v = domain.contains(x0.x) ? f(x0) : 0.0;
        std::fill(values.begin(), values.end(), v);
    } else {
        const auto paths = run_killed_paths(model, spec, domain, fixed_start(x0), {t}, options, key);
        for (std::size_t i = 0; i < paths.size(); ++i) {
            if (paths[i].sigma > t) values[i] = f(paths[i].at[0]);
        }
    }
    for (double v : values) {
        if (!(std::abs(v) <= bound)) throw Error("killed_process", "bound_violated", "|f| exceeds its declared bound");
    }
    const MeanEstimate m = mean_estimate(values);
    return {m.mean, m.std_error, m.count};
}

double escape_g(double t, double C) noexcept
{
    if (C == 0.0) return t;
    return 2.0 * t - std::expm1(C * t) / C;
}

EscapeTable velocity_escape(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                            const std::vector<State>& starts, double t, const std::vector<double>& R_grid, double C,
                            const McOptions& options, const StreamKey& key)
{
    if (starts.empty()) throw Error("killed_process", "no_starts", "velocity escape needs start points");
    if (!(t > 0)) throw Error("killed_process", "bad_time", "t must be positive");
    for (int i = 0; i < domain.dim(); ++i) {
        if (!std::isfinite(domain.bbox_lo()[i]) || !std::isfinite(domain.bbox_hi()[i])) {
            throw Error("killed_process", "unbounded_domain", "velocity escape needs a bounded O");
        }
    }
    EscapeTable table;
    table.t = t;
    table.C = C;
    table.g = escape_g(t, C);
    table.applicable = table.g > 0;
    const double I = C == 0.0 ? 0.0 : std::expm1(C * t) / C - t;

    // Per start: surviving |v_t| and S_t.
    std::vector<std::vector<double>> speed(starts.size()), noise(starts.size());
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const auto paths = run_killed_paths(model, spec, domain, fixed_start(starts[k]), {t}, options,
                                            key.child("start").child(std::to_string(k)));
        std::size_t alive = 0;
        noise[k].reserve(paths.size());
        for (const auto& p : paths) {
            if (p.sigma > t) {
                ++alive;
                speed[k].push_back(p.at[0].v.norm());
                noise[k].push_back(p.noise_sup[0]);
            }
        }
        table.survival.push_back(static_cast<double>(alive) / static_cast<double>(options.paths));
    }
    for (double R : R_grid) {
        EscapeRow row;
        row.R = R;
        row.samples = options.paths;
        const double sR = std::sqrt(R);
        row.threshold_small_v = R * std::exp(-C * t) - sR - C * t;
        row.threshold_large_v = (sR * table.g - C - 0.5 * C * t * t - C * t * I) / (I + t);
        bool first = true;
        for (std::size_t k = 0; k < starts.size(); ++k) {
            std::size_t hits = 0;
            for (double s : speed[k]) hits += s > R ? 1 : 0;
            const double est = static_cast<double>(hits) / static_cast<double>(options.paths);
            if (first || est > row.estimate) {
                row.estimate = est;
                row.ci = wilson_interval(hits, options.paths);
                row.argmax_start = k;
                first = false;
            }
            const bool small_v = starts[k].v.norm() <= sR;
            const double th = small_v ? row.threshold_small_v : row.threshold_large_v;
            std::size_t exceed = 0;
            for (double s : noise[k]) exceed += (small_v ? s > th : s >= th) ? 1 : 0;
            row.noise_bound = std::max(row.noise_bound, static_cast<double>(exceed) / static_cast<double>(options.paths));
        }
        table.rows.push_back(row);
    }
    return table;
}

MarginalEstimate empirical_marginal(const DriftModel& model, const StableNoiseSpec& spec, const State& x0, double t,
                                    const PhaseGrid& grid, double p_prime, const McOptions& options,
                                    const StreamKey& key)
{
    if (!(t > 0)) throw Error("killed_process", "bad_time", "t must be positive");
    if (!(p_prime >= 1)) throw Error("killed_process", "bad_exponent", "p' must be >= 1");
    // Whole space: a box far beyond any sample.
    const Domain everywhere = Domain::box(Vec(spec.dim(), -1e300), Vec(spec.dim(), 1e300));
    const auto paths = run_killed_paths(model, spec, everywhere, fixed_start(x0), {t}, options, key);
    MarginalEstimate out;
    out.p_prime = p_prime;
    PhaseHistogram hist(grid);
    const double w = 1.0 / static_cast<double>(paths.size());
    for (const auto& p : paths) hist.add(p.at[0], w);
    out.histogram = hist;
    out.escaped_fraction = hist.outside;
    out.widen_warning = hist.outside > 0.01;
    out.density.resize(grid.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        out.density[c] = hist.mass[c] / grid.cell_volume();
        acc += std::pow(out.density[c], p_prime) * grid.cell_volume();
        if (hist.mass[c] > out.max_cell_mass) {
            out.max_cell_mass = hist.mass[c];
            out.argmax_cell = c;
        }
    }
    out.lp_norm = std::pow(acc, 1.0 / p_prime);
    return out;
}

}  // namespace kinlevy
