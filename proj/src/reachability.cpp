#include "kinlevy/reachability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "kinlevy/integrator.hpp"
#include "kinlevy/killed_process.hpp"
#include "kinlevy/parallel.hpp"

namespace kinlevy {

const char* to_string(ReachMode mode) noexcept
{
    return mode == ReachMode::Conditioned ? "conditioned" : "direct";
}

double segment_clearance(const Domain& domain, const Vec& a, const Vec& b, double spacing)
{
    const double len = (b - a).norm();
    const auto n = static_cast<std::size_t>(std::ceil(len / spacing)) + 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= n; ++k) {
        const double s = static_cast<double>(k) / static_cast<double>(n);
        best = std::min(best, domain.boundary_distance(a + (b - a) * s));
    }
    return best;
}

std::vector<Vec> plan_polyline(const Domain& domain, const Vec& a, const Vec& b, double clearance,
                               const GeometrySpec& geometry)
{
    const double spacing = clearance / 4.0;
    if (segment_clearance(domain, a, b, spacing) >= clearance) return {a, b};

    const int d = a.dim();
    const Vec& lo = domain.bbox_lo();
    const Vec& hi = domain.bbox_hi();
    for (int i = 0; i < d; ++i) {
        if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) {
            throw Error("reachability", "no_polyline", "unbounded domain and the straight segment is infeasible");
        }
    }
    const int n = std::max(2, geometry.grid_points);
    std::vector<Vec> nodes{a, b};
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n);
    for (std::size_t idx = 0; idx < total; ++idx) {
        Vec p(d);
        std::size_t rem = idx;
        for (int i = 0; i < d; ++i) {
            const auto j = static_cast<double>(rem % static_cast<std::size_t>(n));
            rem /= static_cast<std::size_t>(n);
            p[i] = lo[i] + (hi[i] - lo[i]) * (j + 0.5) / n;
        }
        if (domain.boundary_distance(p) >= clearance) nodes.push_back(p);
    }

    // Dijkstra on the visibility graph; edges are checked lazily.
    const std::size_t m = nodes.size();
    std::vector<double> dist(m, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> prev(m, m);
    std::vector<char> done(m, 0);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[0] = 0.0;
    pq.push({0.0, 0});
    while (!pq.empty()) {
        const auto [du, u] = pq.top();
        pq.pop();
        if (done[u]) continue;
        done[u] = 1;
        if (u == 1) break;
        for (std::size_t w = 0; w < m; ++w) {
            if (done[w] || w == u) continue;
            const double len = (nodes[w] - nodes[u]).norm();
            if (du + len >= dist[w]) continue;
            if (segment_clearance(domain, nodes[u], nodes[w], spacing) < clearance) continue;
            dist[w] = du + len;
            prev[w] = u;
            pq.push({dist[w], w});
        }
    }
    if (!std::isfinite(dist[1])) {
        throw Error("reachability", "no_polyline", "no clearance-feasible broken line between the endpoints");
    }
    std::vector<Vec> path;
    for (std::size_t u = 1; u != m; u = prev[u]) {
        path.push_back(nodes[u]);
        if (u == 0) break;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

namespace {

State flow(const KineticStepper& stepper, State s, double duration, double step)
{
    if (duration <= 0.0) return s;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(duration / step - 1e-9)));
    const double h = duration / static_cast<double>(n);
    const Vec zero(s.v.dim());
    bool truncated = false;
    for (std::size_t k = 0; k < n; ++k) {
        if (!stepper.advance(s, h, zero, truncated)) {
            throw Error("reachability", "skeleton_exploded", "deterministic skeleton diverged");
        }
    }
    return s;
}

// Solves A y = r for d <= 3 by Gaussian elimination with partial pivoting.
bool solve_small(std::vector<double> A, std::vector<double> r, int d, std::vector<double>& y)
{
    for (int c = 0; c < d; ++c) {
        int piv = c;
        for (int i = c + 1; i < d; ++i) {
            if (std::abs(A[i * d + c]) > std::abs(A[piv * d + c])) piv = i;
        }
        if (std::abs(A[piv * d + c]) < 1e-300) return false;
        if (piv != c) {
            for (int j = 0; j < d; ++j) std::swap(A[c * d + j], A[piv * d + j]);
            std::swap(r[c], r[piv]);
        }
        for (int i = c + 1; i < d; ++i) {
            const double f = A[i * d + c] / A[c * d + c];
            for (int j = c; j < d; ++j) A[i * d + j] -= f * A[c * d + j];
            r[i] -= f * r[c];
        }
    }
    y.assign(d, 0.0);
    for (int i = d - 1; i >= 0; --i) {
        double acc = r[i];
        for (int j = i + 1; j < d; ++j) acc -= A[i * d + j] * y[j];
        y[i] = acc / A[i * d + i];
    }
    return true;
}

// Newton iteration with a finite-difference Jacobian for G(w) = target.
template <class G>
Vec newton_solve(const G& g, Vec w, const Vec& target, double tol)
{
    const int d = w.dim();
    Vec r = g(w) - target;
    for (int it = 0; it < 60 && r.norm() > tol; ++it) {
        std::vector<double> J(static_cast<std::size_t>(d * d)), rhs(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(w[j]));
            Vec wp = w;
            wp[j] += h;
            const Vec col = (g(wp) - target - r) * (1.0 / h);
            for (int i = 0; i < d; ++i) J[static_cast<std::size_t>(i * d + j)] = col[i];
        }
        for (int i = 0; i < d; ++i) rhs[static_cast<std::size_t>(i)] = -r[i];
        std::vector<double> y;
        if (!solve_small(J, rhs, d, y)) break;
        Vec dw(d);
        for (int i = 0; i < d; ++i) dw[i] = y[static_cast<std::size_t>(i)];
        double lambda = 1.0;
        for (int k = 0; k < 30; ++k) {
            const Vec trial = w + dw * lambda;
            const Vec rt = g(trial) - target;
            if (rt.norm() < r.norm() || k == 29) {
                w = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    return w;
}

std::vector<std::size_t> jump_window_indices(const CascadePlan& plan)
{
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < plan.windows.size(); ++k) {
        if (plan.windows[k].kind == WindowKind::Jump) idx.push_back(k);
    }
    return idx;
}

double midpoint(const CascadeWindow& w) { return 0.5 * (w.t0 + w.t1); }

}  // namespace

SkeletonRun execute_skeleton(const DriftModel& model, const CascadePlan& plan, const Domain* domain)
{
    const KineticStepper stepper(model, 1e300, 1e300);
    SkeletonRun run;
    State s = plan.x0;
    double now = 0.0;
    auto advance_to = [&](double target) {
        const double dur = target - now;
        if (dur <= 0.0) return;
        const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(dur / plan.skeleton_step - 1e-9)));
        const double h = dur / static_cast<double>(n);
        const Vec zero(s.v.dim());
        bool truncated = false;
        for (std::size_t k = 0; k < n; ++k) {
            const State prev = s;
            if (!stepper.advance(s, h, zero, truncated)) {
                run.stayed_inside = false;
                break;
            }
            if (domain && segment_exit_fraction(*domain, prev.x, s.x) >= 0.0) run.stayed_inside = false;
        }
        now = target;
    };
    for (const std::size_t k : jump_window_indices(plan)) {
        const CascadeWindow& w = plan.windows[k];
        advance_to(midpoint(w));
        run.jump_states.push_back(s);
        s.v += w.target;
    }
    advance_to(plan.t);
    run.end = s;
    return run;
}

CascadePlan void_plan(double t, double beta, double delta, int dim)
{
    CascadePlan plan;
    plan.t = t;
    plan.beta = beta;
    plan.delta = delta;
    plan.x0 = State{Vec(dim), Vec(dim)};
    plan.xF = plan.x0;
    CascadeWindow w;
    w.kind = WindowKind::Coast;
    w.t0 = 0.0;
    w.t1 = t;
    w.target = Vec(dim);
    plan.windows.push_back(w);
    return plan;
}

CascadePlan plan_cascade(const DriftModel& model, const State& x0, const State& xF, double epsilon,
                         const Domain& domain, double t, const GeometrySpec& geometry)
{
    const int d = domain.dim();
    if (x0.x.dim() != d || xF.x.dim() != d || x0.v.dim() != d || xF.v.dim() != d) {
        throw Error("reachability", "dim_mismatch", "endpoint dimension differs from the domain");
    }
    if (d > 2) throw Error("reachability", "unsupported_dim", "planning supports d = 1, 2");
    if (!(epsilon > 0) || !(t > 0)) throw Error("reachability", "bad_input", "epsilon and t must be positive");
    if (!(geometry.rho > 0 && geometry.rho < 1)) throw Error("reachability", "bad_rho", "rho must lie in (0, 1)");
    const double d0 = domain.boundary_distance(x0.x);
    const double dF = domain.boundary_distance(xF.x);
    if (!(d0 > 0)) throw Error("reachability", "start_outside", "x0 is not in D");
    if (!(dF > epsilon)) throw Error("reachability", "epsilon_too_large", "B(x_F, eps) is not inside D");

    CascadePlan plan;
    plan.x0 = x0;
    plan.xF = xF;
    plan.epsilon = epsilon;
    plan.t = t;
    plan.rho = geometry.rho;
    plan.beta = geometry.beta > 0 ? geometry.beta : epsilon / 4.0;
    plan.delta = geometry.delta > 0 ? geometry.delta : std::min(1.0, plan.beta / 2.0);
    plan.skeleton_step = geometry.skeleton_step;
    plan.clearance =
        std::max(0.5 * epsilon, std::min(geometry.clearance_factor * epsilon, 0.999 * std::min(d0, dF)));
    if (!(std::min(d0, dF) > 0.5 * epsilon)) {
        throw Error("reachability", "epsilon_too_large", "endpoint clearance is below eps / 2");
    }
    plan.growth_constant = model.growth_constant.value_or(model.bound.value_or(0.0));
    plan.waypoints = plan_polyline(domain, x0.x, xF.x, plan.clearance, geometry);

    // Coast durations proportional to segment length (10% floor); jump
    // windows are rho times the shorter adjacent coast.
    const std::size_t S = plan.waypoints.size() - 1;
    std::vector<double> len(S);
    for (std::size_t k = 0; k < S; ++k) len[k] = (plan.waypoints[k + 1] - plan.waypoints[k]).norm();
    const double mean_len = std::accumulate(len.begin(), len.end(), 0.0) / static_cast<double>(S);
    std::vector<double> w(S);
    for (std::size_t k = 0; k < S; ++k) w[k] = mean_len > 0 ? std::max(len[k], 0.1 * mean_len) : 1.0;
    std::vector<double> jw(S + 1);
    jw[0] = w[0];
    jw[S] = w[S - 1];
    for (std::size_t k = 1; k < S; ++k) jw[k] = std::min(w[k - 1], w[k]);
    const double units = std::accumulate(w.begin(), w.end(), 0.0) +
                         plan.rho * std::accumulate(jw.begin(), jw.end(), 0.0);
    const double tau = t / units;
    double now = 0.0;
    for (std::size_t k = 0; k <= S; ++k) {
        CascadeWindow jwin;
        jwin.kind = WindowKind::Jump;
        jwin.t0 = now;
        jwin.t1 = k == S ? t : now + plan.rho * tau * jw[k];
        jwin.radius = plan.beta;
        jwin.target = Vec(d);
        jwin.final_correction = k == S;
        now = jwin.t1;
        plan.windows.push_back(jwin);
        if (k < S) {
            CascadeWindow c;
            c.kind = WindowKind::Coast;
            c.t0 = now;
            c.t1 = now + tau * w[k];
            c.target = Vec(d);
            now = c.t1;
            plan.windows.push_back(c);
        }
    }

    // Drift-aware shooting: each jump sets the velocity so that the
    // deterministic flow reaches the next waypoint at the next jump time;
    // the last segment aims at x_F at time t through the final correction.
    const KineticStepper stepper(model, 1e300, 1e300);
    const double h = plan.skeleton_step;
    const auto jumps = jump_window_indices(plan);
    const double tol = 1e-10 * std::max(1.0, epsilon);
    const double t_final = midpoint(plan.windows[jumps[S]]);
    auto final_velocity = [&](const State& before) {
        const auto g = [&](const Vec& wv) { return flow(stepper, State{before.x, wv}, t - t_final, h).v; };
        return newton_solve(g, xF.v, xF.v, tol);
    };
    State s = flow(stepper, x0, midpoint(plan.windows[jumps[0]]), h);
    for (std::size_t k = 0; k < S; ++k) {
        const double tk = midpoint(plan.windows[jumps[k]]);
        const double tn = midpoint(plan.windows[jumps[k + 1]]);
        Vec guess = (plan.waypoints[k + 1] - s.x) * (1.0 / (tn - tk));
        Vec post;
        if (k + 1 < S) {
            const auto g = [&](const Vec& wv) { return flow(stepper, State{s.x, wv}, tn - tk, h).x; };
            post = newton_solve(g, guess, plan.waypoints[k + 1], tol);
        } else {
            const auto g = [&](const Vec& wv) {
                const State pre = flow(stepper, State{s.x, wv}, tn - tk, h);
                return flow(stepper, State{pre.x, final_velocity(pre)}, t - tn, h).x;
            };
            post = newton_solve(g, guess, xF.x, tol);
        }
        plan.windows[jumps[k]].target = post - s.v;
        s = flow(stepper, State{s.x, post}, tn - tk, h);
    }
    plan.windows[jumps[S]].target = final_velocity(s) - s.v;

    const SkeletonRun run = execute_skeleton(model, plan, &domain);
    plan.skeleton_end = run.end;
    plan.skeleton_position_error = (run.end.x - xF.x).norm();
    plan.skeleton_velocity_error = (run.end.v - xF.v).norm();
    if (!run.stayed_inside || plan.skeleton_position_error > 0.5 * epsilon ||
        plan.skeleton_velocity_error > 0.5 * epsilon) {
        throw Error("reachability", "skeleton_miss", "deterministic skeleton does not land within eps / 2 of x_F");
    }
    return plan;
}

CascadeProbability cascade_probability(const CascadePlan& plan, const StableNoiseSpec& spec)
{
    if (!(plan.delta > 0) || !(plan.beta > 0)) throw Error("reachability", "bad_plan", "beta and delta must be > 0");
    const double lambda = spec.big_rate(plan.delta);
    const double C = plan.growth_constant;
    CascadeProbability out;
    std::size_t non_final = 0;
    double drift_shift = 0.0;
    for (const auto& w : plan.windows) {
        if (w.kind == WindowKind::Jump && !w.final_correction) {
            ++non_final;
            drift_shift += C * w.target.norm() * w.length();
        }
    }
    out.final_center_radius =
        (static_cast<double>(non_final + 1) * plan.beta + drift_shift) * std::exp((C + 1.0) * plan.t);
    for (const auto& w : plan.windows) {
        const double dt = w.length();
        double lf = -lambda * dt;
        if (w.kind == WindowKind::Jump) {
            Vec center = w.target;
            if (w.final_correction) {
                Vec dir = center;
                const double n = dir.norm();
                if (n > 0) {
                    dir *= 1.0 / n;
                } else {
                    dir = Vec(center.dim());
                    dir[0] = 1.0;
                }
                center = center + dir * out.final_center_radius;
            }
            const double mass = spec.ball_measure(center, w.radius, plan.delta);
            if (!(mass > 0)) {
                throw Error("reachability", "threshold_swallows_target",
                            "target ball lies inside {|z| <= delta}");
            }
            lf += std::log(dt) + std::log(mass);
        }
        out.window_log_factors.push_back(lf);
        out.log_big_jump += lf;
    }
    out.big_jump = std::exp(out.log_big_jump);
    out.doob_factor = std::max(0.0, 1.0 - plan.t * spec.small_second_moment(plan.delta) / (plan.beta * plan.beta));
    out.log_total = out.doob_factor > 0 ? out.log_big_jump + std::log(out.doob_factor)
                                        : -std::numeric_limits<double>::infinity();
    out.total = std::exp(out.log_total);
    return out;
}

namespace {

struct PathOutcome {
    bool success = false;
    bool small_ok = true;
    double log_weight = -std::numeric_limits<double>::infinity();
};

bool near_target(const State& s, const CascadePlan& plan)
{
    return phase_norm(State{s.x - plan.xF.x, s.v - plan.xF.v}) <= plan.epsilon;
}

}  // namespace

ReachEstimate reach_probability(const DriftModel& model, const StableNoiseSpec& spec, const CascadePlan& plan,
                                const Domain& domain, const ReachOptions& options, const StreamKey& key)
{
    if (options.paths == 0) throw Error("reachability", "no_paths", "need at least one path");
    if (!(options.step > 0)) throw Error("reachability", "bad_step", "step must be positive");
    ReachEstimate est;
    est.mode = options.mode;
    est.paths = options.paths;
    const KineticStepper stepper(model, options.truncation_radius);
    std::vector<PathOutcome> out(options.paths);

    if (options.mode == ReachMode::Direct) {
        parallel_for(options.paths, options.threads, [&](std::size_t i) {
            RandomStream rs = key.stream(i);
            State s = plan.x0;
            bool truncated = false;
            const double sigma = advance_killed(stepper, spec, domain, s, plan.t, options.step, rs, 1e-10, truncated);
            out[i].success = sigma == kCensored && near_target(s, plan);
        });
        for (const auto& o : out) est.successes += o.success ? 1 : 0;
        est.estimate = static_cast<double>(est.successes) / static_cast<double>(options.paths);
        est.ci = wilson_interval(est.successes, options.paths);
        est.success_frequency = est.estimate;
        est.log10_estimate = est.estimate > 0 ? std::log10(est.estimate) : -std::numeric_limits<double>::infinity();
        est.upper_bound_only = est.successes == 0;
        if (est.upper_bound_only) est.estimate = est.ci.hi;
        return est;
    }

    // Conditioned mode: big jumps forced onto the cascade event, small-jump
    // martingale simulated honestly. Each path carries the probability of
    // its big-jump event; the final window depends on the realized velocity.
    const double lambda = spec.big_rate(plan.delta);
    double log_fixed = 0.0;
    for (const auto& w : plan.windows) {
        const double dt = w.length();
        log_fixed += -lambda * dt;
        if (w.kind == WindowKind::Jump && !w.final_correction) {
            const double mass = spec.ball_measure(w.target, w.radius, plan.delta);
            if (!(mass > 0)) {
                throw Error("reachability", "threshold_swallows_target", "target ball lies inside {|z| <= delta}");
            }
            log_fixed += std::log(dt) + std::log(mass);
        }
    }

    if (!options.noise) {
        const SkeletonRun run = execute_skeleton(model, plan, &domain);
        const CascadeWindow& last = plan.windows.back();
        const double lw = log_fixed + std::log(last.length()) +
                          std::log(spec.ball_measure(last.target, last.radius, plan.delta));
        for (auto& o : out) {
            o.success = run.stayed_inside && near_target(run.end, plan);
            o.log_weight = lw;
        }
    } else {
        const SmallJumpSampler small(spec, plan.delta);
        parallel_for(options.paths, options.threads, [&](std::size_t i) {
            RandomStream rs = key.stream(i);
            PathOutcome& o = out[i];
            State s = plan.x0;
            Vec Ls(spec.dim());
            double sup = 0.0;
            bool truncated = false;
            bool alive = true;
            auto run_for = [&](double dur) {
                if (!alive || dur <= 0.0) return;
                const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(dur / options.step - 1e-9)));
                const double h = dur / static_cast<double>(n);
                for (std::size_t k = 0; k < n && alive; ++k) {
                    const Vec dL = small.increment(h, rs);
                    Ls += dL;
                    sup = std::max(sup, Ls.norm());
                    const State prev = s;
                    if (!stepper.advance(s, h, dL, truncated)) {
                        alive = false;
                    } else if (segment_exit_fraction(domain, prev.x, s.x, 1e-10 / h) >= 0.0) {
                        alive = false;
                    }
                }
            };
            double log_w = log_fixed;
            for (const auto& w : plan.windows) {
                if (w.kind == WindowKind::Coast) {
                    run_for(w.length());
                    continue;
                }
                const double tau = w.length() * rs.uniform();
                run_for(tau);
                Vec center = w.target;
                if (w.final_correction) {
                    center = plan.xF.v - s.v;
                    log_w += std::log(w.length()) + std::log(spec.ball_measure(center, w.radius, plan.delta));
                }
                s.v += sample_jump_in_ball(spec, center, w.radius, plan.delta, rs);
                run_for(w.length() - tau);
            }
            o.small_ok = sup <= plan.beta;
            o.success = alive && near_target(s, plan);
            o.log_weight = log_w;
        });
    }

    double lmax = -std::numeric_limits<double>::infinity();
    double lmax_all = -std::numeric_limits<double>::infinity();
    std::size_t small_ok = 0;
    for (const auto& o : out) {
        lmax_all = std::max(lmax_all, o.log_weight);
        if (o.success) {
            ++est.successes;
            lmax = std::max(lmax, o.log_weight);
        }
        small_ok += o.small_ok ? 1 : 0;
    }
    est.success_frequency = static_cast<double>(est.successes) / static_cast<double>(options.paths);
    est.small_event_frequency = static_cast<double>(small_ok) / static_cast<double>(options.paths);
    if (est.successes == 0) {
        // Rule of three on the largest possible weight.
        est.upper_bound_only = true;
        est.log10_estimate = std::log10(3.0 / static_cast<double>(options.paths)) + lmax_all / std::log(10.0);
        est.estimate = std::pow(10.0, est.log10_estimate);
        est.ci = {0.0, est.estimate};
        return est;
    }
    std::vector<double> y(options.paths, 0.0);
    for (std::size_t i = 0; i < options.paths; ++i) {
        if (out[i].success) y[i] = std::exp(out[i].log_weight - lmax);
    }
    const MeanEstimate m = mean_estimate(y);
    const double scale = std::exp(lmax);
    est.estimate = m.mean * scale;
    est.log10_estimate = std::log10(m.mean) + lmax / std::log(10.0);
    const double z = 1.959963984540054;
    est.ci = {std::max(0.0, m.mean - z * m.std_error) * scale, (m.mean + z * m.std_error) * scale};
    // All-success runs have zero spread; fall back to the binomial interval.
    if (m.std_error == 0.0) {
        const Interval w = wilson_interval(est.successes, options.paths);
        est.ci = {w.lo * m.mean / est.success_frequency * scale, w.hi * m.mean / est.success_frequency * scale};
    }
    return est;
}

bool modes_consistent(const ReachEstimate& conditioned, const ReachEstimate& direct)
{
    return conditioned.ci.lo <= direct.ci.hi;
}

}  // namespace kinlevy
