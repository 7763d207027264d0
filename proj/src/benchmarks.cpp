#include "kinlevy/benchmarks.hpp"

#include <chrono>
#include <cmath>
#include <complex>

#include "kinlevy/integrator.hpp"
#include "kinlevy/killed_process.hpp"
#include "kinlevy/lyapunov.hpp"
#include "kinlevy/parallel.hpp"
#include "kinlevy/qsd_estimation.hpp"
#include "kinlevy/reachability.hpp"
#include "kinlevy/spectral_ulam.hpp"
#include "kinlevy/stats.hpp"

namespace kinlevy::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Json vec_json(const Vec& v)
{
    Json a = Json::array();
    for (int i = 0; i < v.dim(); ++i) a.push_back(v[i]);
    return a;
}

Json state_json(const State& s) { return Json{{"x", vec_json(s.x)}, {"v", vec_json(s.v)}}; }

Json interval_json(const Interval& i) { return Json::array({i.lo, i.hi}); }

std::vector<double> doubles(const Json& a) { return a.get<std::vector<double>>(); }

int dim_of(const Json& c) { return c.at("noise").at("dim").get<int>(); }

McOptions mc_from(const Json& section, unsigned threads)
{
    McOptions o;
    o.paths = section.at("paths").get<std::size_t>();
    o.step = section.at("step").get<double>();
    o.threads = threads;
    return o;
}

StreamKey key_for(const TaskContext& ctx, const char* name) { return StreamKey(ctx.seed, name); }

// Model pieces shared by every task.
struct Setup {
    StableNoiseSpec spec;
    DriftModel model;
    Domain domain;
    int dim;

    explicit Setup(const Json& c)
        : spec(noise_from(c)), model(drift_from(c.at("drift"), dim_of(c))), domain(domain_from(c)), dim(dim_of(c))
    {
    }
};

// Point with the given first coordinates, zero elsewhere.
State axis_state(int dim, double x, double v)
{
    State s{Vec(dim), Vec(dim)};
    s.x[0] = x;
    s.v[0] = v;
    return s;
}

Check make_check(std::string id, std::string name, bool passed, Json metrics = Json::object())
{
    return Check{std::move(id), std::move(name), passed, std::move(metrics)};
}

const Check& find_check(const TaskResult& r, const std::string& id)
{
    for (const auto& c : r.checks) {
        if (c.id == id) return c;
    }
    throw Error("cli_runner", "missing_check", r.task + " produced no check " + id);
}

// |empirical CF - exp(-t |xi|^alpha)| at frequency xi along the first axis.
double cf_error(const std::vector<Vec>& samples, double xi, double t, double alpha)
{
    std::vector<double> re(samples.size()), im(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        re[i] = std::cos(xi * samples[i][0]);
        im[i] = std::sin(xi * samples[i][0]);
    }
    const double n = static_cast<double>(samples.size());
    const std::complex<double> ecf(pairwise_sum(re) / n, pairwise_sum(im) / n);
    return std::abs(ecf - std::exp(-t * std::pow(std::abs(xi), alpha)));
}

// ---------------------------------------------------------------- sample

TaskResult sample_impl(const TaskContext& ctx)
{
    TaskResult r{"sample", {}, {}};
    const Json& s = ctx.config.at("sample");
    const int dim = dim_of(ctx.config);
    const std::size_t M = s.at("paths").get<std::size_t>();
    const double t = s.at("t").get<double>();
    const double tol = 4.0 / std::sqrt(static_cast<double>(M));

    auto t0 = Clock::now();
    const auto alphas = doubles(s.at("alphas"));
    const auto xis = doubles(s.at("xi"));
    auto cf = ctx.out->csv("cf.csv", {"alpha", "xi", "error", "tolerance"});
    double worst = 0.0;
    const StreamKey cf_key = key_for(ctx, "sample.cf");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        const StableNoiseSpec spec(alphas[i], dim);
        RandomStream rs = cf_key.stream(i);
        const auto samples = sample_increment(spec, t, M, rs);
        for (double xi : xis) {
            const double e = cf_error(samples, xi, t, alphas[i]);
            worst = std::max(worst, e);
            cf.cell(alphas[i]).cell(xi).cell(e).cell(tol).end_row();
        }
    }
    r.timings["noise_cf"] = seconds_since(t0);
    r.checks.push_back(make_check("sample.cf", "empirical characteristic function", worst < tol,
                                  {{"max_error", worst}, {"tolerance", tol}, {"paths", M}}));

    t0 = Clock::now();
    const StableNoiseSpec spec = noise_from(ctx.config);
    const double delta = s.at("decomposition_delta").get<double>();
    std::vector<double> direct(M), recombined(M), comp(M), jumps(M);
    const StreamKey kd = key_for(ctx, "sample.direct"), kr = key_for(ctx, "sample.decomposed");
    parallel_for(M, ctx.threads, [&](std::size_t i) {
        RandomStream a = kd.stream(i), b = kr.stream(i);
        direct[i] = sample_increment(spec, t, 1, a)[0][0];
        const auto dec = decompose(spec, delta, t, b);
        Vec L = dec.small.increment(t, b);
        for (const auto& j : dec.jumps.big_jumps) L += j.size;
        L -= dec.jumps.compensator * t;
        recombined[i] = L[0];
        comp[i] = dec.jumps.compensator.norm();
        jumps[i] = static_cast<double>(dec.jumps.big_jumps.size());
    });
    double comp_max = 0.0;
    for (double c : comp) comp_max = std::max(comp_max, c);
    const double mean_jumps = pairwise_sum(jumps) / static_cast<double>(M);
    const auto ks = ks_two_sample(direct, recombined);
    const double level = s.at("ks_level").get<double>();
    auto w = ctx.out->csv("decomposition.csv",
                          {"delta", "ks_statistic", "ks_p_value", "compensator_max", "mean_big_jumps", "big_rate_t"});
    w.cell(delta).cell(ks.statistic).cell(ks.p_value).cell(comp_max).cell(mean_jumps).cell(spec.big_rate(delta) * t);
    w.end_row();
    r.timings["decomposition"] = seconds_since(t0);
    r.checks.push_back(make_check("sample.decomposition", "recombined decomposition vs direct sampler",
                                  ks.p_value > level && comp_max == 0.0,
                                  {{"ks_statistic", ks.statistic},
                                   {"ks_p_value", ks.p_value},
                                   {"level", level},
                                   {"compensator_max", comp_max}}));
    return r;
}

// ---------------------------------------------------------------- simulate

TaskResult simulate_impl(const TaskContext& ctx)
{
    TaskResult r{"simulate", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("simulate");
    SimulationOptions o;
    o.horizon = s.at("horizon").get<double>();
    o.step = s.at("step").get<double>();
    o.paths = s.at("paths").get<std::size_t>();
    const std::string mode = s.at("noise").get<std::string>();
    o.noise = mode == "decomposed" ? NoiseMode::Decomposed : mode == "disabled" ? NoiseMode::Disabled : NoiseMode::Exact;
    o.delta = s.at("delta").get<double>();
    o.threads = ctx.threads;
    const State x0 = state_from(s.at("x0"), s.at("v0"));

    const auto t0 = Clock::now();
    const auto batch = simulate(m.model, m.spec, x0, o, key_for(ctx, "simulate"));
    r.timings["simulate"] = seconds_since(t0);

    std::vector<Json> records;
    bool shape_ok = true;
    std::size_t exploded = 0, truncated = 0;
    for (const auto& p : batch.paths) {
        Json xs = Json::array(), vs = Json::array(), jumps = Json::array();
        for (std::size_t i = 0; i < p.states.size(); ++i) {
            xs.push_back(vec_json(p.states[i].x));
            vs.push_back(vec_json(p.states[i].v));
            jumps.push_back(p.jump[i] != 0);
            if (i > 0) {
                shape_ok = shape_ok && p.times[i] >= p.times[i - 1];
                if (p.jump[i]) shape_ok = shape_ok && p.states[i].x == p.states[i - 1].x;
            }
        }
        shape_ok = shape_ok && !p.times.empty() && p.times.front() == 0.0 && p.times.size() == p.states.size() &&
                   p.states.front().x == x0.x && p.states.front().v == x0.v;
        if (!p.exploded) shape_ok = shape_ok && std::abs(p.times.back() - o.horizon) <= 1e-12 * std::max(1.0, o.horizon);
        exploded += p.exploded;
        truncated += p.truncation_hit;
        records.push_back({{"path", p.index},
                           {"times", p.times},
                           {"x", xs},
                           {"v", vs},
                           {"jump", jumps},
                           {"noise_sup", p.noise_sup},
                           {"exploded", p.exploded},
                           {"truncation_hit", p.truncation_hit}});
    }
    ctx.out->jsonl("trajectories.jsonl", records);
    r.checks.push_back(make_check("simulate.shape", "trajectory records start at x0 and end at the horizon", shape_ok,
                                  {{"paths", batch.paths.size()},
                                   {"exploded", exploded},
                                   {"truncation_hit", truncated},
                                   {"points_first_path", batch.paths.empty() ? 0 : batch.paths[0].times.size()}}));
    return r;
}

// ---------------------------------------------------------------- survival

TaskResult survival_impl(const TaskContext& ctx, LambdaEstimate* out)
{
    TaskResult r{"survival", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("survival");
    const auto starts = states_from(s.at("starts"), m.dim);
    const auto t_grid = doubles(s.at("t_grid"));
    const McOptions mc = mc_from(s, ctx.threads);
    const FitWindow window{s.at("fit_window")[0].get<double>(), s.at("fit_window")[1].get<double>()};

    const auto t0 = Clock::now();
    std::vector<std::vector<SurvivalPoint>> curves;
    const StreamKey key = key_for(ctx, "survival");
    for (std::size_t i = 0; i < starts.size(); ++i) {
        curves.push_back(survival_curve(m.model, m.spec, m.domain, starts[i], t_grid, mc, key.child(std::to_string(i))));
    }
    const LambdaEstimate est = estimate_lambda(curves, &window);
    r.timings["lambda_mc"] = seconds_since(t0);

    auto w = ctx.out->csv("survival.csv", {"start", "t", "survival", "ci_lo", "ci_hi", "survivors", "samples"});
    for (std::size_t i = 0; i < curves.size(); ++i) {
        for (const auto& p : curves[i]) {
            w.cell(static_cast<long long>(i)).cell(p.t).cell(p.estimate).cell(p.ci.lo).cell(p.ci.hi);
            w.cell(static_cast<long long>(p.survivors)).cell(static_cast<long long>(p.samples)).end_row();
        }
    }
    auto l = ctx.out->csv("lambda.csv", {"start", "lambda", "std_error", "r_squared", "t_lo", "t_hi"});
    for (std::size_t i = 0; i < est.per_start.size(); ++i) {
        const auto& f = est.per_start[i];
        l.cell(std::to_string(i)).cell(f.lambda).cell(f.std_error).cell(f.r_squared).cell(f.window.t_lo);
        l.cell(f.window.t_hi).end_row();
    }
    l.cell(std::string("pooled")).cell(est.lambda).cell(est.std_error).cell(std::string(""));
    l.cell(est.window.t_lo).cell(est.window.t_hi).end_row();

    Json per = Json::array();
    for (const auto& f : est.per_start) per.push_back({{"lambda", f.lambda}, {"std_error", f.std_error}});
    r.checks.push_back(make_check("survival.lambda_positive", "killing rate bounded away from 0", est.ci.lo > 0,
                                  {{"lambda", est.lambda}, {"ci", interval_json(est.ci)}, {"per_start", per}}));
    // Start independence concerns the asymptotic rate, so it is judged on the
    // automatic window, which skips the start-dependent transient.
    const LambdaEstimate late = estimate_lambda(curves);
    Json per_late = Json::array();
    for (const auto& f : late.per_start) per_late.push_back({{"lambda", f.lambda}, {"std_error", f.std_error}});
    r.checks.push_back(make_check("survival.start_independent", "killing rate does not depend on the start",
                                  late.start_independent,
                                  {{"per_start", per_late},
                                   {"window", {late.window.t_lo, late.window.t_hi}},
                                   {"fixed_window_per_start", per},
                                   {"fixed_window_start_independent", est.start_independent}}));
    if (out) *out = est;
    return r;
}

// ---------------------------------------------------------------- escape

TaskResult escape_impl(const TaskContext& ctx)
{
    TaskResult r{"escape", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("escape");
    std::vector<State> starts;
    for (double x : doubles(s.at("x_points"))) {
        for (double v : doubles(s.at("v_points"))) starts.push_back(axis_state(m.dim, x, v));
    }
    double C = s.at("C").get<double>();
    if (C < 0) {
        if (!m.model.growth_constant) {
            throw Error("cli_runner", "no_growth_constant", "escape.C must be set for drift " + m.model.name);
        }
        C = *m.model.growth_constant;
    }
    const double tol = ctx.config.at("bench").at("escape_tol").get<double>();

    const auto t0 = Clock::now();
    const auto table = velocity_escape(m.model, m.spec, m.domain, starts, s.at("t").get<double>(),
                                       doubles(s.at("R")), C, mc_from(s, ctx.threads), key_for(ctx, "escape"));
    r.timings["escape"] = seconds_since(t0);

    auto w = ctx.out->csv("escape.csv", {"R", "estimate", "ci_lo", "ci_hi", "argmax_start", "noise_bound",
                                         "threshold_small_v", "threshold_large_v"});
    bool monotone = true;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (i > 0) monotone = monotone && row.estimate <= table.rows[i - 1].estimate;
        w.cell(row.R).cell(row.estimate).cell(row.ci.lo).cell(row.ci.hi).cell(static_cast<long long>(row.argmax_start));
        w.cell(row.noise_bound).cell(row.threshold_small_v).cell(row.threshold_large_v).end_row();
    }
    const double last = table.rows.empty() ? 1.0 : table.rows.back().estimate;
    const double R_last = table.rows.empty() ? 0.0 : table.rows.back().R;
    r.checks.push_back(make_check("escape.monotone", "escape probability nonincreasing in R", monotone,
                                  {{"g", table.g}, {"applicable", table.applicable}}));
    r.checks.push_back(make_check("escape.tail", "escape probability small at the largest R", last < tol,
                                  {{"R", R_last}, {"estimate", last}, {"tolerance", tol}}));
    return r;
}

// ---------------------------------------------------------------- lyapunov

TaskResult lyapunov_impl(const TaskContext& ctx)
{
    TaskResult r{"lyapunov", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("lyapunov");

    // Generator on cos(xi v) with no drift.
    auto t0 = Clock::now();
    const double gtol = s.at("generator_tol").get<double>();
    auto g = ctx.out->csv("generator.csv", {"alpha", "xi", "v", "value", "exact", "error", "converged"});
    double worst = 0.0;
    bool converged = true;
    for (double alpha : doubles(s.at("generator_alphas"))) {
        const StableNoiseSpec spec(alpha, m.dim);
        for (double xi : doubles(s.at("generator_xi"))) {
            Vec xv(m.dim);
            xv[0] = xi;
            const VFunction W = cosine_function(xv);
            for (double v : doubles(s.at("generator_v"))) {
                const auto gv = apply_generator(W, nullptr, spec, axis_state(m.dim, 0.3, v));
                const double exact = -std::pow(xi, alpha) * std::cos(xi * v);
                const double e = std::abs(gv.value - exact);
                worst = std::max(worst, e);
                converged = converged && gv.converged;
                g.cell(alpha).cell(xi).cell(v).cell(gv.value).cell(exact).cell(e);
                g.cell(static_cast<long long>(gv.converged)).end_row();
            }
        }
    }
    r.timings["generator_oracle"] = seconds_since(t0);
    r.checks.push_back(make_check("lyapunov.generator", "generator of cos(xi v) matches its closed form",
                                  converged && worst < gtol, {{"max_error", worst}, {"tolerance", gtol}}));

    // Admissible b and the drift condition on shells.
    t0 = Clock::now();
    if (!m.model.pgrad) {
        throw Error("cli_runner", "not_perturbed_gradient", "drift " + m.model.name + " has no perturbed-gradient form");
    }
    const double a = s.at("a").get<double>(), b = s.at("b").get<double>(), p = s.at("p").get<double>();
    const AbInterval ab = admissible_ab(*m.model.pgrad, a);
    Json constraints = Json::array();
    for (const auto& c : ab.constraints) constraints.push_back({{"name", c.name}, {"b_bound", c.b_bound}});
    r.checks.push_back(make_check("lyapunov.admissible_b", "configured b lies in the admissible interval",
                                  b > 0 && b < ab.b_max && ab.satisfied_at(b),
                                  {{"b", b}, {"b_max", ab.b_max}, {"binding", ab.binding}, {"constraints", constraints}}));

    const LyapunovFunction W = build_lyapunov(*m.model.pgrad, a, b, p, m.spec.alpha(), GridSpec{}, m.dim);
    const auto rep = drift_condition_report(W, m.model, m.spec, doubles(s.at("radii")),
                                            s.at("samples_per_shell").get<std::size_t>(), QuadSpec{}, ctx.threads);
    r.timings["drift_condition"] = seconds_since(t0);
    auto d = ctx.out->csv("drift_shells.csv", {"r", "sup_ratio", "points", "failures", "argmax_x0", "argmax_v0"});
    Json rows = Json::array();
    for (const auto& row : rep.rows) {
        d.cell(row.r).cell(row.sup_ratio).cell(static_cast<long long>(row.points));
        d.cell(static_cast<long long>(row.failures)).cell(row.argmax.x[0]).cell(row.argmax.v[0]).end_row();
        rows.push_back({{"r", row.r}, {"sup_ratio", row.sup_ratio}});
    }
    r.checks.push_back(make_check("lyapunov.drift_condition", "L W / W <= -c < 0 on the outer shells", rep.passed,
                                  {{"c_hat", rep.c_hat},
                                   {"inner_sup", rep.inner_sup},
                                   {"failure_fraction", rep.failure_fraction},
                                   {"shells", rows},
                                   {"shift", W.params().shift}}));

    // Maximal inequality for W_p along paths.
    t0 = Clock::now();
    const Json& sm = s.at("supermartingale");
    const DpEstimate dp = estimate_Dp(W, m.model, m.spec, sm.at("dp_box").get<double>(), sm.at("dp_points").get<int>(),
                                      QuadSpec{}, ctx.threads);
    const State x0 = state_from(sm.at("x0"), sm.at("v0"));
    const double W0 = W.value(x0);
    std::vector<double> levels;
    const auto factors = doubles(sm.at("levels"));
    for (double f : factors) levels.push_back(f * W0);
    const double t = sm.at("t").get<double>();
    const auto sp = supermartingale_probe(W, m.model, m.spec, x0, levels, t, dp.D_p, mc_from(sm, ctx.threads),
                                          key_for(ctx, "lyapunov.supermartingale"));
    r.timings["supermartingale"] = seconds_since(t0);
    auto w = ctx.out->csv("supermartingale.csv", {"level_factor", "R", "estimate", "ci_lo", "ci_hi", "bound"});
    bool below = true;
    for (std::size_t i = 0; i < sp.rows.size(); ++i) {
        const auto& row = sp.rows[i];
        below = below && row.estimate <= row.bound;
        w.cell(factors[i]).cell(row.R).cell(row.estimate).cell(row.ci.lo).cell(row.ci.hi).cell(row.bound).end_row();
    }
    r.checks.push_back(make_check("lyapunov.supermartingale", "P[sup W >= R] never exceeds W(x0) e^{D t} / R", below,
                                  {{"W0", W0}, {"D_p", dp.D_p}, {"D_p_argmax", state_json(dp.argmax)}, {"t", t}}));
    return r;
}

// ---------------------------------------------------------------- reach

TaskResult reach_impl(const TaskContext& ctx)
{
    TaskResult r{"reach", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("reach");
    const State x0 = state_from(s.at("x0"), s.at("v0"));
    const State xF = state_from(s.at("xF"), s.at("vF"));
    GeometrySpec geo;
    geo.rho = s.at("rho").get<double>();
    geo.beta = s.at("beta").get<double>();
    geo.delta = s.at("delta").get<double>();

    const auto t0 = Clock::now();
    const CascadePlan plan =
        plan_cascade(m.model, x0, xF, s.at("epsilon").get<double>(), m.domain, s.at("t").get<double>(), geo);
    const CascadeProbability price = cascade_probability(plan, m.spec);
    ReachOptions ro;
    ro.paths = s.at("paths").get<std::size_t>();
    ro.step = s.at("step").get<double>();
    ro.threads = ctx.threads;
    const auto cond = reach_probability(m.model, m.spec, plan, m.domain, ro, key_for(ctx, "reach.conditioned"));
    ro.mode = ReachMode::Direct;
    ro.paths = s.at("direct_paths").get<std::size_t>();
    const auto direct = reach_probability(m.model, m.spec, plan, m.domain, ro, key_for(ctx, "reach.direct"));
    r.timings["reach"] = seconds_since(t0);

    Json waypoints = Json::array(), windows = Json::array();
    for (const auto& y : plan.waypoints) waypoints.push_back(vec_json(y));
    for (const auto& wdw : plan.windows) {
        windows.push_back({{"kind", wdw.kind == WindowKind::Jump ? "jump" : "coast"},
                           {"t0", wdw.t0},
                           {"t1", wdw.t1},
                           {"target", vec_json(wdw.target)},
                           {"radius", wdw.radius},
                           {"final_correction", wdw.final_correction}});
    }
    ctx.out->json("plan.json", {{"x0", state_json(plan.x0)},
                                {"xF", state_json(plan.xF)},
                                {"epsilon", plan.epsilon},
                                {"t", plan.t},
                                {"beta", plan.beta},
                                {"delta", plan.delta},
                                {"rho", plan.rho},
                                {"clearance", plan.clearance},
                                {"waypoints", waypoints},
                                {"windows", windows},
                                {"skeleton_end", state_json(plan.skeleton_end)},
                                {"skeleton_position_error", plan.skeleton_position_error},
                                {"skeleton_velocity_error", plan.skeleton_velocity_error},
                                {"log_big_jump", price.log_big_jump},
                                {"doob_factor", price.doob_factor},
                                {"log_total", price.log_total},
                                {"window_log_factors", price.window_log_factors}});

    auto w = ctx.out->csv("reach.csv", {"mode", "estimate", "ci_lo", "ci_hi", "log10_estimate", "successes", "paths",
                                        "success_frequency", "small_event_frequency", "upper_bound_only"});
    for (const auto* e : {&cond, &direct}) {
        w.cell(std::string(to_string(e->mode))).cell(e->estimate).cell(e->ci.lo).cell(e->ci.hi).cell(e->log10_estimate);
        w.cell(static_cast<long long>(e->successes)).cell(static_cast<long long>(e->paths)).cell(e->success_frequency);
        w.cell(e->small_event_frequency).cell(static_cast<long long>(e->upper_bound_only)).end_row();
    }
    auto summary = [](const ReachEstimate& e) {
        return Json{{"estimate", e.estimate}, {"ci", interval_json(e.ci)}, {"successes", e.successes}, {"paths", e.paths}};
    };
    r.checks.push_back(make_check("reach.conditioned_positive", "forced-cascade lower confidence bound is positive",
                                  cond.ci.lo > 0,
                                  {{"conditioned", summary(cond)}, {"segments", plan.segments()}}));
    r.checks.push_back(make_check("reach.modes_consistent", "conditioned estimate does not exceed the direct one",
                                  modes_consistent(cond, direct),
                                  {{"conditioned", summary(cond)}, {"direct", summary(direct)}}));
    return r;
}

// ---------------------------------------------------------------- qsd-fv

struct FvData {
    PhaseHistogram histogram;
    std::vector<State> snapshots;
};

TaskResult qsd_fv_impl(const TaskContext& ctx, FvData* out)
{
    TaskResult r{"qsd-fv", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("qsd_fv");
    FlemingViotOptions fo;
    fo.particles = s.at("particles").get<std::size_t>();
    fo.horizon = s.at("horizon").get<double>();
    fo.step = s.at("step").get<double>();
    fo.burn_in_fraction = s.at("burn_in_fraction").get<double>();
    fo.snapshot_interval = s.at("snapshot_interval").get<double>();
    fo.threads = ctx.threads;
    const PhaseGrid grid = grid_from(ctx.config);

    auto t0 = Clock::now();
    const auto fv = fleming_viot(m.model, m.spec, m.domain, {state_from(s.at("x0"), s.at("v0"))}, grid, fo,
                                 key_for(ctx, "qsd_fv"));
    r.timings["fleming_viot"] = seconds_since(t0);
    ctx.out->histogram("qsd_fv.csv", fv.histogram);
    const double q995 = fv.snapshots.empty() ? 0.0 : velocity_quantile(fv.snapshots, 0.995);
    r.checks.push_back(make_check("qsd_fv.resampling", "particles were resampled after burn-in",
                                  fv.resamples_after_burn_in > 0,
                                  {{"resample_rate", fv.resample_rate},
                                   {"resamples_after_burn_in", fv.resamples_after_burn_in},
                                   {"outside_mass", fv.histogram.outside},
                                   {"velocity_q995", q995},
                                   {"snapshots", fv.snapshots.size()}}));

    t0 = Clock::now();
    McOptions mc;
    mc.step = fo.step;
    mc.threads = ctx.threads;
    const double s_push = s.at("eigen_s").get<double>();
    const auto ec = eigen_consistency(m.model, m.spec, m.domain, fv.snapshots, fv.histogram, s_push, mc,
                                      key_for(ctx, "qsd_fv.eigen"));
    r.timings["eigen_consistency"] = seconds_since(t0);
    ctx.out->histogram("qsd_fv_pushed.csv", ec.pushed);
    const double tol = s.at("eigen_tol").get<double>();
    r.checks.push_back(make_check("qsd_fv.eigen_consistency", "pushed and renormalized measure matches itself",
                                  ec.tv <= tol, {{"tv", ec.tv}, {"tolerance", tol}, {"s", s_push}, {"survival", ec.survival}}));
    if (out) *out = FvData{fv.histogram, fv.snapshots};
    return r;
}

// ---------------------------------------------------------------- qsd-cond

TaskResult qsd_cond_impl(const TaskContext& ctx, PhaseHistogram* out)
{
    TaskResult r{"qsd-cond", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("qsd_cond");
    const PhaseGrid grid = grid_from(ctx.config);
    McOptions mc = mc_from(s, ctx.threads);

    auto t0 = Clock::now();
    const auto law = conditioned_law(m.model, m.spec, m.domain, state_from(s.at("x0"), s.at("v0")),
                                     s.at("t").get<double>(), grid, mc, key_for(ctx, "qsd_cond"));
    r.timings["conditioned_law"] = seconds_since(t0);
    ctx.out->histogram("qsd_cond.csv", law.histogram);
    const auto min_survivors = ctx.config.at("bench").at("min_survivors").get<std::size_t>();
    r.checks.push_back(make_check("qsd_cond.survivors", "enough survivors for the conditioned histogram",
                                  law.survivors >= min_survivors,
                                  {{"survivors", law.survivors}, {"required", min_survivors}, {"survival", law.survival}}));

    t0 = Clock::now();
    const auto starts = states_from(s.at("forget_starts"), m.dim);
    if (starts.size() != 2) throw ConfigError({"qsd_cond.forget_starts: expected two starts"});
    mc.paths = s.at("forget_paths").get<std::size_t>();
    const auto times = doubles(s.at("forget_times"));
    auto w = ctx.out->csv("forgetting.csv", {"t", "tv", "survivors_a", "survivors_b"});
    std::vector<double> tvs;
    const StreamKey key = key_for(ctx, "qsd_cond.forget");
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto a = conditioned_law(m.model, m.spec, m.domain, starts[0], times[i], grid, mc,
                                       key.child("a" + std::to_string(i)));
        const auto b = conditioned_law(m.model, m.spec, m.domain, starts[1], times[i], grid, mc,
                                       key.child("b" + std::to_string(i)));
        tvs.push_back(tv_distance(a.histogram, b.histogram));
        w.cell(times[i]).cell(tvs.back()).cell(static_cast<long long>(a.survivors));
        w.cell(static_cast<long long>(b.survivors)).end_row();
    }
    r.timings["forgetting"] = seconds_since(t0);
    bool decreasing = tvs.size() >= 2;
    for (std::size_t i = 1; i < tvs.size(); ++i) decreasing = decreasing && tvs[i] < tvs[i - 1];
    r.checks.push_back(make_check("qsd_cond.forgetting", "conditioned laws from two starts merge over time", decreasing,
                                  {{"times", times}, {"tv", tvs}}));
    if (out) *out = law.histogram;
    return r;
}

// ---------------------------------------------------------------- ulam

struct UlamData {
    PhaseGrid grid;
    std::vector<double> left_vec;
    double lambda = 0.0;
};

TaskResult ulam_impl(const TaskContext& ctx, UlamData* out)
{
    TaskResult r{"ulam", {}, {}};
    const Setup m(ctx.config);
    const Json& s = ctx.config.at("ulam");
    UlamOptions uo;
    uo.V = s.at("V").get<double>();
    uo.x_cells = s.at("x_cells").get<int>();
    uo.v_cells = s.at("v_cells").get<int>();
    uo.dt = s.at("dt").get<double>();
    uo.samples_per_cell = s.at("samples_per_cell").get<std::size_t>();
    uo.step = s.at("step").get<double>();
    uo.threads = ctx.threads;

    const auto t0 = Clock::now();
    const auto op = build_ulam(m.model, m.spec, m.domain, uo, key_for(ctx, "ulam"));
    const auto est = eigen_triple(op.K, uo.dt);
    const auto rep = compactness_diagnostic(op, est);
    r.timings["ulam"] = seconds_since(t0);

    auto sp = ctx.out->csv("ulam_spectrum.csv", {"k", "modulus"});
    for (std::size_t k = 0; k < est.moduli.size(); ++k) sp.cell(static_cast<long long>(k)).cell(est.moduli[k]).end_row();
    std::vector<std::string> cols{"cell"};
    for (int a = 0; a < m.dim; ++a) cols.push_back("x" + std::to_string(a));
    for (int a = 0; a < m.dim; ++a) cols.push_back("v" + std::to_string(a));
    for (const char* c : {"left", "right", "kill_mass", "truncation_mass"}) cols.push_back(c);
    auto vecs = ctx.out->csv("ulam_vectors.csv", cols);
    for (std::size_t c = 0; c < op.grid.size(); ++c) {
        const State ctr = op.grid.cell_center(c);
        vecs.cell(static_cast<long long>(c));
        for (int a = 0; a < m.dim; ++a) vecs.cell(ctr.x[a]);
        for (int a = 0; a < m.dim; ++a) vecs.cell(ctr.v[a]);
        vecs.cell(est.left_vec[c]).cell(est.right_vec[c]).cell(op.kill_mass[c]).cell(op.truncation_mass[c]).end_row();
    }
    auto bands = ctx.out->csv("ulam_bands.csv", {"R", "mass"});
    for (const auto& b : rep.bands) bands.cell(b.R).cell(b.mass).end_row();
    if (s.at("export_matrix").get<bool>()) {
        auto mat = ctx.out->csv("ulam_matrix.csv", {"row", "col", "mass"});
        for (std::size_t i = 0; i < op.K.n; ++i) {
            for (const auto& [j, v] : op.K.rows[i]) {
                mat.cell(static_cast<long long>(i)).cell(static_cast<long long>(j)).cell(v).end_row();
            }
        }
    }

    const double tol = ctx.config.at("bench").at("escape_tol").get<double>();
    const double band_end = rep.bands.empty() ? 1.0 : rep.bands.back().mass;
    r.checks.push_back(make_check("ulam.subcritical", "leading eigenvalue in (0, 1)", est.rho > 0 && est.rho < 1,
                                  {{"rho", est.rho},
                                   {"lambda_ulam", est.lambda_ulam},
                                   {"complex_pair", est.complex_pair},
                                   {"iterations", est.iterations},
                                   {"recurrent_block_size", est.recurrent_block_size},
                                   {"warnings", op.warnings}}));
    r.checks.push_back(make_check("ulam.bands", "velocity band mass nonincreasing and small at the edge",
                                  rep.bands_nonincreasing && band_end < tol,
                                  {{"endpoint", band_end}, {"tolerance", tol}}));
    const std::size_t k = std::min<std::size_t>(4, est.moduli.empty() ? 0 : est.moduli.size() - 1);
    r.checks.push_back(make_check("ulam.gap", "subdominant moduli below the leading one",
                                  est.moduli.size() >= 2 && est.moduli[k] < est.moduli[0] && rep.moduli_decreasing,
                                  {{"moduli", est.moduli}}));
    if (out) *out = UlamData{op.grid, est.left_vec, est.lambda_ulam};
    return r;
}

// ---------------------------------------------------------------- duhamel

TaskResult duhamel_impl(const TaskContext& ctx)
{
    TaskResult r{"duhamel", {}, {}};
    const StableNoiseSpec spec = noise_from(ctx.config);
    const int dim = dim_of(ctx.config);
    const Json& s = ctx.config.at("duhamel");
    const DriftModel model = drift_from(s.at("drift"), dim);
    const auto centers = states_from(Json::array({s.at("bump_center")}), dim);
    const TestFunction f = bump_function(centers[0], s.at("bump_rx").get<double>(), s.at("bump_rv").get<double>());
    const State x0 = state_from(s.at("x0"), s.at("v0"));
    const double t = s.at("t").get<double>();
    DuhamelOptions o;
    o.paths = s.at("paths").get<std::size_t>();
    o.step = s.at("step").get<double>();
    o.s_points = s.at("s_points").get<int>();
    o.fd_step = s.at("fd_step").get<double>();
    o.threads = ctx.threads;

    auto t0 = Clock::now();
    const auto res = duhamel_residual(model, spec, f, x0, t, o, key_for(ctx, "duhamel"));
    r.timings["duhamel"] = seconds_since(t0);
    t0 = Clock::now();
    o.paths = s.at("zero_drift_paths").get<std::size_t>();
    const auto zero = duhamel_residual(zero_drift(dim), spec, f, x0, t, o, key_for(ctx, "duhamel.zero"));
    r.timings["duhamel_zero"] = seconds_since(t0);

    auto w = ctx.out->csv("duhamel.csv", {"case", "lhs", "semigroup_term", "correction", "correction_se", "residual",
                                          "residual_se", "eta", "omitted_tail_bound", "within_3se", "inconclusive"});
    for (const auto& [name, e] : {std::pair{model.name, &res}, std::pair{std::string("zero"), &zero}}) {
        w.cell(name).cell(e->lhs).cell(e->semigroup_term).cell(e->correction).cell(e->correction_se);
        w.cell(e->residual).cell(e->residual_se).cell(e->eta).cell(e->omitted_tail_bound);
        w.cell(static_cast<long long>(e->within_3se)).cell(static_cast<long long>(e->inconclusive)).end_row();
    }
    r.checks.push_back(make_check("duhamel.residual", "perturbative formula residual within 3 SE of 0",
                                  res.within_3se && !res.inconclusive,
                                  {{"residual", res.residual},
                                   {"residual_se", res.residual_se},
                                   {"correction", res.correction},
                                   {"correction_se", res.correction_se}}));
    r.checks.push_back(make_check("duhamel.zero_drift", "residual vanishes without drift",
                                  std::abs(zero.residual) <= 3 * zero.residual_se + 1e-12 && zero.correction == 0.0,
                                  {{"residual", zero.residual}, {"residual_se", zero.residual_se}}));
    return r;
}

void absorb(TaskResult& into, const TaskResult& part)
{
    for (const auto& c : part.checks) into.checks.push_back(c);
    for (const auto& [k, v] : part.timings) into.timings[k] = v;
}

Json metrics_of(std::initializer_list<const Check*> checks)
{
    Json m = Json::object();
    for (const Check* c : checks) m[c->id] = c->metrics;
    return m;
}

bool all_passed(std::initializer_list<const Check*> checks)
{
    bool ok = true;
    for (const Check* c : checks) ok = ok && c->passed;
    return ok;
}

}  // namespace

bool TaskResult::passed() const
{
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return true;
}

TaskResult task_sample(const TaskContext& ctx) { return sample_impl(ctx); }
TaskResult task_simulate(const TaskContext& ctx) { return simulate_impl(ctx); }
TaskResult task_survival(const TaskContext& ctx) { return survival_impl(ctx, nullptr); }
TaskResult task_escape(const TaskContext& ctx) { return escape_impl(ctx); }
TaskResult task_lyapunov(const TaskContext& ctx) { return lyapunov_impl(ctx); }
TaskResult task_reach(const TaskContext& ctx) { return reach_impl(ctx); }
TaskResult task_qsd_fv(const TaskContext& ctx) { return qsd_fv_impl(ctx, nullptr); }
TaskResult task_qsd_cond(const TaskContext& ctx) { return qsd_cond_impl(ctx, nullptr); }
TaskResult task_ulam(const TaskContext& ctx) { return ulam_impl(ctx, nullptr); }
TaskResult task_duhamel(const TaskContext& ctx) { return duhamel_impl(ctx); }

TaskResult task_bench_all(const TaskContext& ctx)
{
    const Json& bench = ctx.config.at("bench");
    TaskResult parts{"bench-all", {}, {}};
    LambdaEstimate lambda;
    FvData fv;
    PhaseHistogram cond;
    UlamData ulam;
    absorb(parts, sample_impl(ctx));
    absorb(parts, lyapunov_impl(ctx));
    absorb(parts, survival_impl(ctx, &lambda));
    absorb(parts, ulam_impl(ctx, &ulam));
    absorb(parts, qsd_fv_impl(ctx, &fv));
    absorb(parts, qsd_cond_impl(ctx, &cond));
    absorb(parts, escape_impl(ctx));
    absorb(parts, reach_impl(ctx));
    absorb(parts, duhamel_impl(ctx));
    auto c = [&](const char* id) { return &find_check(parts, id); };

    TaskResult r{"bench-all", {}, parts.timings};
    r.checks.push_back(make_check("AC01", "noise characteristic function", c("sample.cf")->passed, c("sample.cf")->metrics));
    r.checks.push_back(make_check("AC02", "generator oracle", c("lyapunov.generator")->passed,
                                  c("lyapunov.generator")->metrics));
    r.checks.push_back(make_check("AC03", "decomposition consistency", c("sample.decomposition")->passed,
                                  c("sample.decomposition")->metrics));

    const Check* adm = c("lyapunov.admissible_b");
    const double b_max = adm->metrics.at("b_max").get<double>();
    const double want_b = bench.at("expected_b_max").get<double>();
    const std::string binding = adm->metrics.at("binding").get<std::string>();
    const bool b_ok = std::abs(b_max - want_b) <= 1e-12 * std::max(1.0, want_b) &&
                      binding == bench.at("expected_binding").get<std::string>();
    Json m4 = metrics_of({adm, c("lyapunov.drift_condition")});
    m4["expected_b_max"] = want_b;
    r.checks.push_back(make_check("AC04", "Lyapunov admissibility and drift condition",
                                  b_ok && all_passed({adm, c("lyapunov.drift_condition")}), m4));
    r.checks.push_back(make_check("AC05", "supermartingale bound", c("lyapunov.supermartingale")->passed,
                                  c("lyapunov.supermartingale")->metrics));

    const double rel = std::abs(lambda.lambda - ulam.lambda) / lambda.lambda;
    const double rel_tol = bench.at("lambda_rel_tol").get<double>();
    r.checks.push_back(make_check("AC06", "killing rate, Monte Carlo vs Ulam", rel <= rel_tol,
                                  {{"lambda_mc", lambda.lambda},
                                   {"lambda_mc_ci", interval_json(lambda.ci)},
                                   {"lambda_ulam", ulam.lambda},
                                   {"relative_gap", rel},
                                   {"tolerance", rel_tol}}));

    const double tv_qsd = tv_distance(fv.histogram, cond);
    const double tv_tol = bench.at("qsd_tv_tol").get<double>();
    Json m7 = metrics_of({c("qsd_cond.survivors"), c("qsd_cond.forgetting")});
    m7["tv_fv_conditioned"] = tv_qsd;
    m7["tolerance"] = tv_tol;
    r.checks.push_back(make_check("AC07", "QSD, Fleming-Viot vs conditioned law",
                                  tv_qsd <= tv_tol && all_passed({c("qsd_cond.survivors"), c("qsd_cond.forgetting")}),
                                  m7));
    r.checks.push_back(make_check("AC08", "eigen-consistency of the QSD estimate",
                                  c("qsd_fv.eigen_consistency")->passed, c("qsd_fv.eigen_consistency")->metrics));
    r.checks.push_back(make_check("AC09", "velocity escape and Ulam band profile",
                                  all_passed({c("escape.monotone"), c("escape.tail"), c("ulam.bands")}),
                                  metrics_of({c("escape.monotone"), c("escape.tail"), c("ulam.bands")})));
    r.checks.push_back(make_check("AC10", "irreducibility, forced cascade vs direct",
                                  all_passed({c("reach.conditioned_positive"), c("reach.modes_consistent")}),
                                  metrics_of({c("reach.conditioned_positive"), c("reach.modes_consistent")})));
    r.checks.push_back(make_check("AC11", "Duhamel residual",
                                  all_passed({c("duhamel.residual"), c("duhamel.zero_drift")}),
                                  metrics_of({c("duhamel.residual"), c("duhamel.zero_drift")})));

    // Ulam left vector against Fleming-Viot samples binned on the Ulam grid.
    PhaseHistogram fv_on_ulam(ulam.grid);
    for (const auto& st : fv.snapshots) fv_on_ulam.add(st);
    const double tv_left = tv_distance(fv_on_ulam.mass, ulam.left_vec);
    const double left_tol = bench.at("left_vec_tv_tol").get<double>();
    r.checks.push_back(make_check("ulam.left_vs_fv", "Ulam left vector matches the Fleming-Viot samples",
                                  tv_left <= left_tol, {{"tv", tv_left}, {"tolerance", left_tol}}));
    for (const auto& chk : parts.checks) r.checks.push_back(chk);
    return r;
}

const std::vector<std::string>& task_names()
{
    static const std::vector<std::string> names{"sample", "simulate", "survival", "escape", "lyapunov", "reach",
                                                "qsd-fv", "qsd-cond", "ulam",     "duhamel", "bench-all"};
    return names;
}

TaskResult run_task(const std::string& name, const TaskContext& ctx)
{
    if (name == "sample") return task_sample(ctx);
    if (name == "simulate") return task_simulate(ctx);
    if (name == "survival") return task_survival(ctx);
    if (name == "escape") return task_escape(ctx);
    if (name == "lyapunov") return task_lyapunov(ctx);
    if (name == "reach") return task_reach(ctx);
    if (name == "qsd-fv") return task_qsd_fv(ctx);
    if (name == "qsd-cond") return task_qsd_cond(ctx);
    if (name == "ulam") return task_ulam(ctx);
    if (name == "duhamel") return task_duhamel(ctx);
    if (name == "bench-all") return task_bench_all(ctx);
    throw Error("cli_runner", "unknown_subcommand", "unknown subcommand " + name);
}

Json summary_json(const TaskResult& result)
{
    Json checks = Json::array();
    for (const auto& c : result.checks) {
        checks.push_back({{"id", c.id}, {"name", c.name}, {"passed", c.passed}, {"metrics", c.metrics}});
    }
    return {{"task", result.task}, {"passed", result.passed()}, {"checks", checks}};
}

}  // namespace kinlevy::cli
