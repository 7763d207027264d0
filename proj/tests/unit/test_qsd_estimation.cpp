#include <catch_amalgamated.hpp>

#include <cmath>

#include "kinlevy/qsd_estimation.hpp"

using namespace kinlevy;
using Catch::Approx;

namespace {

State point(double x, double v) { return State{Vec{x}, Vec{v}}; }

std::vector<SurvivalPoint> exponential_curve(double rate, double t_max, std::size_t n0)
{
    std::vector<SurvivalPoint> c;
    for (double t = 0.0; t <= t_max + 1e-12; t += 0.25) {
        SurvivalPoint p;
        p.t = t;
        p.estimate = std::exp(-rate * t);
        p.samples = n0;
        p.survivors = static_cast<std::size_t>(std::llround(p.estimate * static_cast<double>(n0)));
        c.push_back(p);
    }
    return c;
}

const PhaseGrid small_grid = PhaseGrid::over(Vec{-1.0}, Vec{1.0}, 5.0, 10, 10);

}  // namespace

TEST_CASE("Fleming-Viot without exits is a plain average", "[qsd_estimation]")
{
    StableNoiseSpec spec(1.5, 1);
    FlemingViotOptions o;
    o.particles = 200;
    o.horizon = 0.5;
    o.step = 0.05;
    o.snapshot_interval = 0.0;
    const auto wide = Domain::interval(-1e6, 1e6);
    const auto res = fleming_viot(builtin_drift("harmonic_damped"), spec, wide, {point(0.0, 0.0)}, small_grid, o,
                                  StreamKey(1, "fv"));
    CHECK(res.ensemble.resample_log.empty());
    CHECK(res.resample_rate == 0.0);
    CHECK(res.histogram.total() == Approx(1.0).margin(1e-12));
    CHECK(res.records > 0);
}

TEST_CASE("Fleming-Viot ensemble invariants", "[qsd_estimation]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto I = Domain::interval(-1, 1);
    const auto model = builtin_drift("harmonic_damped");
    FlemingViotOptions o;
    o.particles = 300;
    o.horizon = 3.0;
    o.step = 0.01;
    o.snapshot_interval = 0.5;
    const auto res = fleming_viot(model, spec, I, {point(-0.5, 0.0), point(0.5, 1.0)}, small_grid, o,
                                  StreamKey(2, "fv"));
    REQUIRE(res.ensemble.states.size() == 300);
    for (const auto& s : res.ensemble.states) CHECK(I.contains(s.x));
    CHECK_FALSE(res.ensemble.resample_log.empty());
    double last = 0.0;
    for (const auto& e : res.ensemble.resample_log) {
        CHECK(e.time >= last);
        CHECK(e.killed != e.donor);
        last = e.time;
    }
    CHECK(res.histogram.total() == Approx(1.0).margin(1e-12));
    CHECK(res.resample_rate > 0);
    CHECK(res.snapshots.size() % 300 == 0);
    CHECK(res.snapshots.size() >= 300 * 4);
    CHECK(res.burn_in == Approx(0.9));

    o.threads = 3;
    const auto again = fleming_viot(model, spec, I, {point(-0.5, 0.0), point(0.5, 1.0)}, small_grid, o,
                                    StreamKey(2, "fv"));
    CHECK(again.ensemble.resample_log.size() == res.ensemble.resample_log.size());
    CHECK(again.histogram.mass == res.histogram.mass);
}

TEST_CASE("Fleming-Viot argument errors", "[qsd_estimation]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto I = Domain::interval(-1, 1);
    const auto model = builtin_drift("harmonic_damped");
    FlemingViotOptions o;
    o.particles = 50;
    CHECK_THROWS_AS(fleming_viot(model, spec, I, {point(0, 0)}, small_grid, o, StreamKey(1, "e")), Error);
    o.particles = 100;
    CHECK_THROWS_AS(fleming_viot(model, spec, I, {point(2, 0)}, small_grid, o, StreamKey(1, "e")), Error);
    CHECK_THROWS_AS(fleming_viot(model, spec, I, {}, small_grid, o, StreamKey(1, "e")), Error);
}

TEST_CASE("conditioned law", "[qsd_estimation]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto I = Domain::interval(-1, 1);
    const auto model = builtin_drift("harmonic_damped");
    McOptions mc;
    mc.paths = 2000;
    const State x0 = point(-0.33, 0.21);
    const auto now = conditioned_law(model, spec, I, x0, 0.0, small_grid, mc, StreamKey(3, "cl"));
    CHECK(now.histogram.mass[*small_grid.cell_of(x0)] == 1.0);
    CHECK(now.survival == 1.0);

    const auto later = conditioned_law(model, spec, I, x0, 1.0, small_grid, mc, StreamKey(3, "cl"));
    CHECK(later.histogram.total() == Approx(1.0).margin(1e-12));
    CHECK(later.survival < 1.0);
    CHECK(later.cell_ci.size() == small_grid.size());
    for (std::size_t c = 0; c < small_grid.size(); ++c) {
        CHECK(later.cell_ci[c].lo <= later.histogram.mass[c] + 1e-12);
        CHECK(later.cell_ci[c].hi >= later.histogram.mass[c] - 1e-12);
    }
    mc.paths = 400;
    try {
        conditioned_law(model, spec, I, x0, 1.0, small_grid, mc, StreamKey(3, "cl"));
        FAIL("expected too_few_survivors");
    } catch (const Error& e) {
        CHECK(e.code() == "too_few_survivors");
    }
}

TEST_CASE("killing rate from exact exponentials", "[qsd_estimation]")
{
    const auto a = exponential_curve(2.0, 3.0, 1000000000);
    const auto b = exponential_curve(2.0, 3.0, 500000000);
    const auto fit = fit_lambda(a);
    CHECK(fit.lambda == Approx(2.0).margin(1e-6));
    CHECK(fit.r_squared == Approx(1.0).margin(1e-12));
    const auto est = estimate_lambda({a, b});
    CHECK(est.lambda == Approx(2.0).margin(1e-6));
    CHECK(est.start_independent);
    CHECK(est.ci.lo <= 2.0);
    CHECK(est.ci.hi >= 2.0);

    const FitWindow w{1.0, 2.0};
    CHECK(fit_lambda(a, &w).window.t_lo == 1.0);
    const FitWindow empty{10.0, 11.0};
    CHECK_THROWS_AS(fit_lambda(a, &empty), Error);
    CHECK_THROWS_AS(estimate_lambda({a}), Error);

    // Different rates are flagged as start dependent.
    const auto est2 = estimate_lambda({exponential_curve(2.0, 3.0, 1000000), exponential_curve(2.5, 3.0, 1000000)});
    CHECK_FALSE(est2.start_independent);
}

TEST_CASE("killing rate from simulated survival", "[qsd_estimation]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto I = Domain::interval(-1, 1);
    const auto model = builtin_drift("harmonic_damped");
    McOptions mc;
    mc.paths = 20000;
    std::vector<double> ts;
    for (double t = 0.5; t <= 6.0 + 1e-9; t += 0.5) ts.push_back(t);
    const auto c1 = survival_curve(model, spec, I, point(-0.5, 0.0), ts, mc, StreamKey(4, "s1"));
    const auto c2 = survival_curve(model, spec, I, point(0.5, 1.0), ts, mc, StreamKey(4, "s2"));
    const auto est = estimate_lambda({c1, c2});
    CHECK(est.lambda > 0);
    CHECK(est.ci.lo > 0);
    CHECK(est.start_independent);
}

TEST_CASE("eigenfunction estimate", "[qsd_estimation]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto I = Domain::interval(-1, 1);
    const auto model = builtin_drift("harmonic_damped");
    const auto grid = PhaseGrid::over(Vec{-1.0}, Vec{1.0}, 4.0, 4, 4);
    const std::vector<double> mu(grid.size(), 1.0 / static_cast<double>(grid.size()));
    McOptions mc;
    mc.paths = 1000;
    const auto phi = estimate_phi(model, spec, I, grid, 0.5, 0.36, mu, mc, StreamKey(5, "phi"));
    double norm = 0.0, mass = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        if (!phi.adequate[c]) continue;
        CHECK(phi.phi[c] > 0);
        norm += mu[c] * phi.phi[c];
        mass += mu[c];
    }
    CHECK(norm / mass == Approx(1.0).margin(1e-9));
    // Interior, slow start versus a start near x = 1 heading out at speed 3.
    const auto deep = *grid.cell_of(point(-0.25, -1.0));
    const auto edge = *grid.cell_of(point(0.75, 3.0));
    REQUIRE(phi.adequate[deep]);
    if (phi.adequate[edge]) {
        CHECK(phi.phi[deep] > phi.phi[edge]);
    } else {
        CHECK(phi.survivors[edge] < phi.survivors[deep]);
    }
    CHECK(phi_relative_change(phi, phi) == 0.0);
    CHECK_THROWS_AS(estimate_phi(model, spec, I, grid, 0.5, 0.36, {1.0}, mc, StreamKey(5, "phi")), Error);
}

TEST_CASE("velocity quantile", "[qsd_estimation]")
{
    std::vector<State> s;
    for (int i = 1; i <= 100; ++i) s.push_back(point(0.0, (i % 2 ? -1.0 : 1.0) * i));
    CHECK(velocity_quantile(s, 0.5) == Approx(50).margin(1.0));
    CHECK(velocity_quantile(s, 1.0) == Approx(100));
}

TEST_CASE("eigen consistency of the conditioned law against itself at s = 0", "[qsd_estimation]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto I = Domain::interval(-1, 1);
    const auto model = builtin_drift("harmonic_damped");
    McOptions mc;
    mc.paths = 2000;
    const auto law = conditioned_law(model, spec, I, point(0.0, 0.0), 1.0, small_grid, mc, StreamKey(6, "ec"));
    const auto ec = eigen_consistency(model, spec, I, law.survivor_states, law.histogram, 1e-9, mc, StreamKey(6, "p"));
    CHECK(ec.tv < 1e-3);
    CHECK(ec.survival == Approx(1.0).margin(1e-3));
}
