#include <catch_amalgamated.hpp>

#include <cmath>

#include "kinlevy/killed_process.hpp"

using namespace kinlevy;
using Catch::Approx;

namespace {

State point(double x, double v) { return State{Vec{x}, Vec{v}}; }

PathRecord free_flight(double x0, double v0, double horizon, double step)
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = horizon;
    o.step = step;
    o.noise = NoiseMode::Disabled;
    return simulate_path(zero_drift(1), spec, point(x0, v0), o, StreamKey(1, "flight"), 0);
}

}  // namespace

TEST_CASE("domains", "[killed_process]")
{
    const auto I = Domain::interval(-1, 1);
    CHECK(I.contains(Vec{0.999}));
    CHECK_FALSE(I.contains(Vec{1.0}));  // open set
    CHECK(I.boundary_distance(Vec{0.25}) == Approx(0.75));
    const auto B = Domain::ball(Vec{0.0, 0.0}, 2.0);
    CHECK(B.boundary_distance(Vec{1.0, 0.0}) == Approx(1.0));
    const auto L = Domain::union_of({Domain::box(Vec{0.0, 0.0}, Vec{3.0, 1.0}), Domain::box(Vec{0.0, 0.0}, Vec{1.0, 3.0})});
    CHECK(L.contains(Vec{2.5, 0.5}));
    CHECK(L.contains(Vec{0.5, 2.5}));
    CHECK_FALSE(L.contains(Vec{2.5, 2.5}));
    CHECK(segment_exit_fraction(I, Vec{0.0}, Vec{2.0}) == Approx(0.5).margin(1e-9));
    CHECK(segment_exit_fraction(I, Vec{0.0}, Vec{0.5}) < 0);
}

TEST_CASE("exit time of the unit-speed path", "[killed_process]")
{
    const auto I = Domain::interval(-1, 1);
    for (double step : {0.3, 0.07, 0.01}) {
        const auto rec = exit_time(free_flight(0.0, 1.0, 2.0, step), I);
        INFO("step=" << step);
        CHECK(rec.exited);
        CHECK(rec.sigma == Approx(1.0).margin(1e-9));
        CHECK(std::abs(rec.exit_state.x[0] - 1.0) < 1e-9);
    }
    const auto inside = exit_time(free_flight(0.0, 0.2, 2.0, 0.01), I);
    CHECK_FALSE(inside.exited);
    CHECK(std::isinf(inside.sigma));
    CHECK(inside.horizon == Approx(2.0));
    const auto outside = exit_time(free_flight(1.5, 0.0, 2.0, 0.01), I);
    CHECK(outside.exited);
    CHECK(outside.sigma == 0.0);
}

TEST_CASE("survival curve", "[killed_process]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto model = builtin_drift("harmonic_damped");
    const auto I = Domain::interval(-1, 1);
    McOptions mc;
    mc.paths = 2000;
    const std::vector<double> ts{0.0, 0.25, 0.5, 1.0, 2.0, 3.0};
    const auto curve = survival_curve(model, spec, I, point(0.0, 0.0), ts, mc, StreamKey(3, "surv"));
    REQUIRE(curve.size() == ts.size());
    CHECK(curve[0].estimate == 1.0);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].estimate <= curve[i - 1].estimate);
        CHECK(curve[i].ci.lo <= curve[i].estimate);
        CHECK(curve[i].ci.hi >= curve[i].estimate);
    }
    CHECK(curve.back().estimate < 0.6);
    mc.paths = 50;
    CHECK_THROWS_AS(survival_curve(model, spec, I, point(0.0, 0.0), ts, mc, StreamKey(3, "surv")), Error);
}

TEST_CASE("killed expectation identities on shared paths", "[killed_process]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto model = builtin_drift("harmonic_damped");
    const auto I = Domain::interval(-1, 1);
    McOptions mc;
    mc.paths = 3000;
    const StreamKey key(8, "ke");
    const State x0 = point(0.3, -0.5);
    const double t = 1.0;
    const auto one = killed_expectation([](const State&) { return 1.0; }, 1.0, model, spec, I, x0, t, mc, key);
    const auto surv = survival_curve(model, spec, I, x0, {t}, mc, key);
    CHECK(one.estimate == surv[0].estimate);
    CHECK(one.estimate <= 1.0);
    const auto zero = killed_expectation([](const State&) { return 0.0; }, 1.0, model, spec, I, x0, t, mc, key);
    CHECK(zero.estimate == 0.0);
    const auto pos = killed_expectation([](const State& s) { return s.v[0] * s.v[0] / (1 + s.v[0] * s.v[0]); }, 1.0,
                                        model, spec, I, x0, t, mc, key);
    CHECK(pos.estimate >= 0.0);
    CHECK(pos.estimate <= one.estimate);
    CHECK_THROWS_AS(
        killed_expectation([](const State&) { return 2.0; }, 1.0, model, spec, I, x0, t, mc, key), Error);
}

TEST_CASE("velocity escape table", "[killed_process]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto model = builtin_drift("harmonic_damped");
    const auto I = Domain::interval(-1, 1);
    McOptions mc;
    mc.paths = 2000;
    const std::vector<State> K{point(0.0, 0.0), point(-0.5, 3.0), point(0.5, -10.0)};
    const std::vector<double> R{0.0, 1.0, 2.0, 5.0, 10.0, 50.0};
    const auto tab = velocity_escape(model, spec, I, K, 0.2, R, 1.0, mc, StreamKey(2, "esc"));
    REQUIRE(tab.rows.size() == R.size());
    double sup_surv = 0.0;
    for (double s : tab.survival) sup_surv = std::max(sup_surv, s);
    CHECK(tab.rows[0].estimate == sup_surv);
    for (std::size_t i = 1; i < R.size(); ++i) CHECK(tab.rows[i].estimate <= tab.rows[i - 1].estimate);
    CHECK(tab.applicable);
    CHECK(tab.g == Approx(0.4 - std::expm1(0.2)));
    // g(t) = 2t - (e^t - 1) turns negative beyond t = 1.25.
    const auto late = velocity_escape(model, spec, I, K, 1.5, {10.0}, 1.0, mc, StreamKey(2, "esc"));
    CHECK_FALSE(late.applicable);
    CHECK_THROWS_AS(velocity_escape(model, spec, Domain::box(Vec{-INFINITY}, Vec{1.0}), K, 0.2, R, 1.0, mc,
                                    StreamKey(2, "esc")),
                    Error);
}

TEST_CASE("empirical marginal", "[killed_process]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto model = builtin_drift("harmonic_damped");
    McOptions mc;
    mc.paths = 20000;
    const auto grid = PhaseGrid::over(Vec{-8.0}, Vec{8.0}, 25.0, 40, 50);
    const auto m = empirical_marginal(model, spec, point(0.0, 0.0), 1.0, grid, 2.0, mc, StreamKey(6, "marg"));
    double total = m.escaped_fraction;
    for (double x : m.histogram.mass) total += x;
    CHECK(total == Approx(1.0).margin(1e-12));
    CHECK(m.max_cell_mass < 0.5);
    CHECK(m.lp_norm > 0);
    CHECK_FALSE(m.widen_warning);

    const State x0 = point(0.33, -0.21);
    const auto early = empirical_marginal(model, spec, x0, 1e-3, grid, 2.0, mc, StreamKey(6, "marg"));
    CHECK(early.argmax_cell == *grid.cell_of(x0));
}

TEST_CASE("estimators ignore the thread count", "[killed_process]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto model = builtin_drift("harmonic_damped");
    const auto I = Domain::interval(-1, 1);
    McOptions mc;
    mc.paths = 500;
    const auto a = survival_curve(model, spec, I, point(0, 0), {0.5, 1.0}, mc, StreamKey(1, "thr"));
    mc.threads = 3;
    const auto b = survival_curve(model, spec, I, point(0, 0), {0.5, 1.0}, mc, StreamKey(1, "thr"));
    CHECK(a[0].survivors == b[0].survivors);
    CHECK(a[1].survivors == b[1].survivors);
}
