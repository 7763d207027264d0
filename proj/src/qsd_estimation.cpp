#include "kinlevy/qsd_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kinlevy/parallel.hpp"

namespace kinlevy {

FlemingViotResult fleming_viot(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                               const std::vector<State>& initial, const PhaseGrid& grid,
                               const FlemingViotOptions& options, const StreamKey& key)
{
    if (options.particles < 100) throw Error("qsd_estimation", "too_few_particles", "Fleming-Viot needs N >= 100");
    if (initial.empty()) throw Error("qsd_estimation", "no_initial", "need initial states");
    if (!(options.step > 0) || !(options.horizon >= 0)) {
        throw Error("qsd_estimation", "bad_options", "step must be positive and horizon nonnegative");
    }
    const std::size_t N = options.particles;
    FlemingViotResult res;
    res.histogram = PhaseHistogram(grid);
    ParticleEnsemble& ens = res.ensemble;
    ens.states.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        ens.states[i] = initial[i % initial.size()];
        if (!domain.contains(ens.states[i].x)) {
            throw Error("qsd_estimation", "initial_outside", "initial states must lie in D");
        }
    }
    std::vector<RandomStream> streams;
    streams.reserve(N);
    for (std::size_t i = 0; i < N; ++i) streams.push_back(key.stream(i));

    const KineticStepper stepper(model, options.truncation_radius);
    const auto steps = static_cast<std::size_t>(std::ceil(options.horizon / options.step - 1e-9));
    const double h = steps == 0 ? 0.0 : options.horizon / static_cast<double>(steps);
    const double scale = std::pow(h, 1.0 / spec.alpha());
    res.burn_in = options.burn_in_fraction * options.horizon;
    const auto burn_steps = static_cast<std::size_t>(std::ceil(res.burn_in / (h > 0 ? h : 1.0) - 1e-9));
    const std::size_t snap_every =
        options.snapshot_interval > 0 && h > 0
            ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(options.snapshot_interval / h)))
            : 0;

    std::vector<char> killed(N, 0);
    std::vector<std::size_t> survivors;
    survivors.reserve(N);
    auto record = [&]() {
        for (const State& s : ens.states) res.histogram.add(s, 1.0);
        ++res.records;
    };
    if (steps == 0) {
        record();
    }
    for (std::size_t k = 1; k <= steps; ++k) {
        const double now = static_cast<double>(k) * h;
        parallel_for(N, options.threads, [&](std::size_t i) {
            State& s = ens.states[i];
            const State prev = s;
            bool truncated = false;
            const Vec dL = sample_stable_unit(spec, streams[i]) * scale;
            killed[i] = 0;
            if (!stepper.advance(s, h, dL, truncated) || segment_exit_fraction(domain, prev.x, s.x) >= 0.0) {
                killed[i] = 1;
            }
        });
        survivors.clear();
        for (std::size_t i = 0; i < N; ++i) {
            if (!killed[i]) survivors.push_back(i);
        }
        if (survivors.empty()) {
            throw Error("qsd_estimation", "extinction",
                        "all particles were killed in one step; use a smaller step or more particles");
        }
        // Donors are survivors of this step, so the order of replacement
        // does not matter.
        for (std::size_t i = 0; i < N; ++i) {
            if (!killed[i]) continue;
            const std::size_t donor = survivors[streams[i].below(survivors.size())];
            ens.states[i] = ens.states[donor];
            ens.resample_log.push_back({now, i, donor});
            if (k > burn_steps) ++res.resamples_after_burn_in;
        }
        if (k > burn_steps) {
            if ((k - burn_steps) % std::max<std::size_t>(1, options.record_every) == 0) record();
            if (snap_every > 0 && (k - burn_steps) % snap_every == 0) {
                res.snapshots.insert(res.snapshots.end(), ens.states.begin(), ens.states.end());
            }
        }
    }
    ens.time = static_cast<double>(steps) * h;
    const double window = ens.time - static_cast<double>(std::min(burn_steps, steps)) * h;
    res.resample_rate = window > 0 ? static_cast<double>(res.resamples_after_burn_in) / (static_cast<double>(N) * window)
                                   : 0.0;
    const double total = res.histogram.total();
    if (total > 0) {
        for (double& m : res.histogram.mass) m /= total;
        res.histogram.outside /= total;
    }
    return res;
}

ConditionedLaw conditioned_law(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                               const State& x0, double t, const PhaseGrid& grid, const McOptions& options,
                               const StreamKey& key)
{
    return conditioned_law(model, spec, domain, fixed_start(x0), t, grid, options, key);
}

ConditionedLaw conditioned_law(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                               const StartSampler& start, double t, const PhaseGrid& grid, const McOptions& options,
                               const StreamKey& key)
{
    if (!(t >= 0)) throw Error("qsd_estimation", "bad_time", "t must be nonnegative");
    ConditionedLaw law;
    law.samples = options.paths;
    if (t == 0.0) {
        for (std::size_t i = 0; i < options.paths; ++i) {
            RandomStream rs = key.stream(i);
            const State s = start(i, rs);
            if (domain.contains(s.x)) law.survivor_states.push_back(s);
        }
    } else {
        const auto paths = run_killed_paths(model, spec, domain, start, {t}, options, key);
        for (const auto& p : paths) {
            if (p.sigma > t) law.survivor_states.push_back(p.at[0]);
        }
    }
    law.survivors = law.survivor_states.size();
    law.survival = options.paths == 0 ? 0.0 : static_cast<double>(law.survivors) / static_cast<double>(options.paths);
    if (law.survivors < 500 && t > 0) {
        throw Error("qsd_estimation", "too_few_survivors",
                    std::to_string(law.survivors) + " survivors; increase M so that M S(t) >= 500");
    }
    law.histogram = PhaseHistogram(grid);
    for (const State& s : law.survivor_states) law.histogram.add(s, 1.0);
    std::vector<std::size_t> counts(grid.size(), 0);
    for (const State& s : law.survivor_states) {
        if (const auto c = grid.cell_of(s)) ++counts[*c];
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, law.survivors));
    for (double& m : law.histogram.mass) m /= n;
    law.histogram.outside /= n;
    law.cell_ci.reserve(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) law.cell_ci.push_back(wilson_interval(counts[c], law.survivors));
    return law;
}

namespace {

LambdaFit fit_points(const std::vector<SurvivalPoint>& pts)
{
    std::vector<double> t, y;
    for (const auto& p : pts) {
        t.push_back(p.t);
        y.push_back(-std::log(p.estimate));
    }
    const LinearFit lf = linear_fit(t, y);
    LambdaFit fit;
    fit.lambda = lf.slope;
    fit.r_squared = lf.r_squared;
    fit.window = {pts.front().t, pts.back().t};
    // Endpoint binomial: p = S(t_hi) / S(t_lo) given n_lo survivors at t_lo.
    const double n_lo = static_cast<double>(pts.front().survivors);
    const double p = pts.back().estimate / pts.front().estimate;
    const double span = pts.back().t - pts.front().t;
    fit.std_error = (n_lo > 0 && p > 0 && span > 0) ? std::sqrt(std::max(0.0, 1.0 - p) / (n_lo * p)) / span : 0.0;
    return fit;
}

}  // namespace

LambdaFit fit_lambda(const std::vector<SurvivalPoint>& curve, const FitWindow* window, double min_r_squared)
{
    std::vector<SurvivalPoint> pts;
    for (const auto& p : curve) {
        if (p.estimate > 0) pts.push_back(p);
    }
    std::sort(pts.begin(), pts.end(), [](const SurvivalPoint& a, const SurvivalPoint& b) { return a.t < b.t; });
    if (window != nullptr) {
        std::vector<SurvivalPoint> sel;
        for (const auto& p : pts) {
            if (p.t >= window->t_lo - 1e-12 && p.t <= window->t_hi + 1e-12) sel.push_back(p);
        }
        if (sel.size() < 2) throw Error("qsd_estimation", "fit_window_not_found", "fewer than two points in window");
        return fit_points(sel);
    }
    // Earliest start whose tail (with adequate survivors) is affine. R^2 alone
    // tolerates the early transient, so the front and back halves of the
    // window must also have slopes agreeing within 2 combined SE.
    std::size_t end = pts.size();
    while (end > 0 && pts[end - 1].survivors < 100) --end;
    for (std::size_t begin = 0; begin + 3 <= end; ++begin) {
        if (pts[begin].t <= 0.0) continue;
        const std::vector<SurvivalPoint> sel(pts.begin() + static_cast<long>(begin), pts.begin() + static_cast<long>(end));
        const LambdaFit f = fit_points(sel);
        if (f.r_squared < min_r_squared) continue;
        const std::size_t mid = begin + (end - begin) / 2;
        if (end - mid >= 2 && mid + 1 - begin >= 2) {
            const LambdaFit front = fit_points(std::vector<SurvivalPoint>(pts.begin() + static_cast<long>(begin),
                                                                          pts.begin() + static_cast<long>(mid + 1)));
            const LambdaFit back = fit_points(
                std::vector<SurvivalPoint>(pts.begin() + static_cast<long>(mid), pts.begin() + static_cast<long>(end)));
            const double se = std::hypot(front.std_error, back.std_error);
            if (std::abs(front.lambda - back.lambda) > 2.0 * se + 1e-9 * std::abs(back.lambda)) continue;
        }
        return f;
    }
    throw Error("qsd_estimation", "fit_window_not_found", "no window with R^2 >= 0.99");
}

LambdaEstimate estimate_lambda(const std::vector<std::vector<SurvivalPoint>>& curves, const FitWindow* window)
{
    if (curves.size() < 2) throw Error("qsd_estimation", "too_few_starts", "need survival curves from >= 2 starts");
    LambdaEstimate est;
    // Without an explicit window, fit every start on the intersection of
    // their automatic windows so the slopes are comparable.
    FitWindow common{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    if (window == nullptr) {
        for (const auto& c : curves) {
            const LambdaFit f = fit_lambda(c);
            common.t_lo = std::max(common.t_lo, f.window.t_lo);
            common.t_hi = std::min(common.t_hi, f.window.t_hi);
        }
        if (!(common.t_hi > common.t_lo)) {
            throw Error("qsd_estimation", "fit_window_not_found", "automatic windows of the starts do not overlap");
        }
        window = &common;
    }
    double wsum = 0.0, acc = 0.0;
    for (const auto& c : curves) {
        LambdaFit f = fit_lambda(c, window);
        if (window == &common && f.r_squared < 0.99) {
            throw Error("qsd_estimation", "fit_window_not_found", "survival curve is not log-affine");
        }
        est.per_start.push_back(f);
        const double w = f.std_error > 0 ? 1.0 / (f.std_error * f.std_error) : 1.0;
        wsum += w;
        acc += w * f.lambda;
    }
    est.lambda = acc / wsum;
    bool all_exact = true;
    for (const auto& f : est.per_start) all_exact = all_exact && f.std_error == 0.0;
    est.std_error = all_exact ? 0.0 : std::sqrt(1.0 / wsum);
    est.ci = {est.lambda - 1.959963984540054 * est.std_error, est.lambda + 1.959963984540054 * est.std_error};
    est.window = est.per_start.front().window;
    for (std::size_t i = 0; i < est.per_start.size(); ++i) {
        for (std::size_t j = i + 1; j < est.per_start.size(); ++j) {
            const auto& a = est.per_start[i];
            const auto& b = est.per_start[j];
            const double se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
            if (std::abs(a.lambda - b.lambda) > 1.959963984540054 * se + 1e-12) est.start_independent = false;
        }
    }
    return est;
}

PhiEstimate estimate_phi(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                         const PhaseGrid& grid, double t, double lambda, const std::vector<double>& mu_cells,
                         const McOptions& options, const StreamKey& key, std::size_t min_survivors)
{
    if (mu_cells.size() != grid.size()) throw Error("qsd_estimation", "size_mismatch", "mu must be given per cell");
    if (!(t > 0)) throw Error("qsd_estimation", "bad_time", "t must be positive");
    PhiEstimate est;
    est.t = t;
    est.min_survivors = min_survivors;
    est.phi.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    est.survivors.assign(grid.size(), 0);
    est.adequate.assign(grid.size(), 0);
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const State x = grid.cell_center(c);
        if (!domain.contains(x.x)) continue;
        const auto paths = run_killed_paths(model, spec, domain, fixed_start(x), {t}, options,
                                            key.child("cell").child(std::to_string(c)));
        std::size_t alive = 0;
        for (const auto& p : paths) alive += p.sigma > t ? 1 : 0;
        est.survivors[c] = alive;
        if (alive == 0) continue;  // flagged: phi stays NaN
        est.phi[c] = std::exp(lambda * t) * static_cast<double>(alive) / static_cast<double>(options.paths);
        est.adequate[c] = alive >= min_survivors ? 1 : 0;
    }
    double norm = 0.0, mass = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        if (est.adequate[c]) {
            norm += mu_cells[c] * est.phi[c];
            mass += mu_cells[c];
        }
    }
    if (!(norm > 0)) throw Error("qsd_estimation", "no_adequate_cells", "no cell has enough survivors");
    // Renormalize mu over the resolved cells so that mu(phi) = 1 exactly there.
    const double k = mass / norm;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        if (std::isfinite(est.phi[c])) est.phi[c] *= k;
    }
    return est;
}

double phi_relative_change(const PhiEstimate& a, const PhiEstimate& b)
{
    double worst = 0.0;
    for (std::size_t c = 0; c < a.phi.size() && c < b.phi.size(); ++c) {
        if (!a.adequate[c] || !b.adequate[c]) continue;
        worst = std::max(worst, std::abs(a.phi[c] - b.phi[c]) / std::abs(a.phi[c]));
    }
    return worst;
}

EigenConsistency eigen_consistency(const DriftModel& model, const StableNoiseSpec& spec, const Domain& domain,
                                   const std::vector<State>& mu_samples, const PhaseHistogram& reference, double s,
                                   const McOptions& options, const StreamKey& key)
{
    if (mu_samples.empty()) throw Error("qsd_estimation", "no_samples", "need samples of mu");
    McOptions opts = options;
    opts.paths = mu_samples.size();
    const auto paths = run_killed_paths(
        model, spec, domain, [&](std::size_t i, RandomStream&) { return mu_samples[i]; }, {s}, opts, key);
    EigenConsistency out;
    out.pushed = PhaseHistogram(reference.grid);
    std::size_t alive = 0;
    for (const auto& p : paths) {
        if (p.sigma > s) {
            out.pushed.add(p.at[0], 1.0);
            ++alive;
        }
    }
    out.survival = static_cast<double>(alive) / static_cast<double>(paths.size());
    out.tv = tv_distance(out.pushed, reference);
    return out;
}

double velocity_quantile(const std::vector<State>& states, double fraction)
{
    if (states.empty()) return 0.0;
    std::vector<double> m(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        double a = 0.0;
        for (int k = 0; k < states[i].v.dim(); ++k) a = std::max(a, std::abs(states[i].v[k]));
        m[i] = a;
    }
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m.size()))) - 1;
    std::nth_element(m.begin(), m.begin() + static_cast<long>(std::min(k, m.size() - 1)), m.end());
    return m[std::min(k, m.size() - 1)];
}

}  // namespace kinlevy
