#include <catch_amalgamated.hpp>

#include <cmath>

#include "kinlevy/integrator.hpp"
#include "kinlevy/stats.hpp"

using namespace kinlevy;
using Catch::Approx;

namespace {

State point(double x, double v) { return State{Vec{x}, Vec{v}}; }

}  // namespace

TEST_CASE("zero horizon gives the initial point only", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = 0.0;
    o.paths = 3;
    const auto batch = simulate(builtin_drift("harmonic_damped"), spec, point(0.3, -1.0), o, StreamKey(1, "t"));
    REQUIRE(batch.paths.size() == 3);
    for (const auto& p : batch.paths) {
        REQUIRE(p.times.size() == 1);
        CHECK(p.times[0] == 0.0);
        CHECK(p.states[0].x[0] == 0.3);
        CHECK(p.states[0].v[0] == -1.0);
    }
}

TEST_CASE("invalid options are rejected", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.step = 0.0;
    CHECK_THROWS_AS(simulate(zero_drift(1), spec, point(0, 0), o, StreamKey(1, "t")), Error);
    o.step = 0.01;
    CHECK_THROWS_AS(simulate(zero_drift(2), spec, point(0, 0), o, StreamKey(1, "t")), Error);
}

TEST_CASE("linear friction without noise follows the exponential", "[integrator]")
{
    auto model = builtin_drift("anisotropic_friction", {{"gamma_plus", 1.0}, {"gamma_minus", 1.0}, {"spring", 0.0}});
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = 1.0;
    o.step = 1e-3;
    o.noise = NoiseMode::Disabled;
    const auto path = simulate_path(model, spec, point(0.0, 2.0), o, StreamKey(1, "ode"), 0);
    double err = 0.0;
    for (std::size_t i = 0; i < path.times.size(); ++i) {
        err = std::max(err, std::abs(path.states[i].v[0] - 2.0 * std::exp(-path.times[i])));
    }
    CHECK(err < 1e-3);
    // x(t) = 2 (1 - e^{-t}).
    CHECK(path.states.back().x[0] == Approx(2.0 * (1.0 - std::exp(-1.0))).margin(1e-3));
}

TEST_CASE("driftless velocity is the stable process", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = 1.0;
    o.step = 0.05;
    o.paths = 10000;
    const auto batch = simulate(zero_drift(1), spec, point(0.0, 0.7), o, StreamKey(11, "free"));
    std::vector<double> v1;
    for (const auto& p : batch.paths) v1.push_back(p.states.back().v[0] - 0.7);
    RandomStream rs(12, 3, 0);
    std::vector<double> ref;
    for (const auto& z : sample_increment(spec, 1.0, 10000, rs)) ref.push_back(z[0]);
    CHECK(ks_two_sample(v1, ref).p_value > 0.01);
}

TEST_CASE("decomposed mode keeps position continuous and records jumps", "[integrator]")
{
    StableNoiseSpec spec(1.2, 2);
    SimulationOptions o;
    o.horizon = 2.0;
    o.step = 0.02;
    o.paths = 50;
    o.noise = NoiseMode::Decomposed;
    o.delta = 0.2;
    const auto model = builtin_drift("harmonic_damped", {}, 2);
    const auto batch = simulate(model, spec, State{Vec{0.1, 0.0}, Vec{0.0, 0.5}}, o, StreamKey(4, "dec"));
    std::size_t jumps = 0;
    for (const auto& p : batch.paths) {
        for (std::size_t i = 1; i < p.times.size(); ++i) {
            CHECK(p.times[i] >= p.times[i - 1]);
            CHECK(p.noise_sup[i] >= p.noise_sup[i - 1]);
            if (!p.jump[i]) continue;
            ++jumps;
            CHECK(p.times[i] == p.times[i - 1]);
            CHECK(p.states[i].x == p.states[i - 1].x);
            CHECK(p.states[i].v == p.states[i - 1].v + p.jump_size[i]);
            CHECK(p.jump_size[i].norm() > o.delta);
        }
    }
    // 50 paths x 2 time units x lambda_delta.
    const double expected = 50 * 2.0 * spec.big_rate(0.2);
    CHECK(static_cast<double>(jumps) == Approx(expected).margin(5 * std::sqrt(expected)));
}

TEST_CASE("paths replay bit for bit and ignore the thread count", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = 1.0;
    o.step = 0.01;
    o.paths = 64;
    const auto model = builtin_drift("velocity_threshold");
    const StreamKey key(77, "replay");
    const auto a = simulate(model, spec, point(0.2, 0.1), o, key);
    o.threads = 4;
    const auto b = simulate(model, spec, point(0.2, 0.1), o, key);
    for (std::size_t i = 0; i < a.paths.size(); ++i) {
        REQUIRE(a.paths[i].states.size() == b.paths[i].states.size());
        CHECK(a.paths[i].states.back().x == b.paths[i].states.back().x);
        CHECK(a.paths[i].states.back().v == b.paths[i].states.back().v);
    }
    const auto again = simulate_path(model, spec, point(0.2, 0.1), o, key, 17);
    CHECK(again.states.back().v == a.paths[17].states.back().v);
}

TEST_CASE("explosions are flagged, not propagated", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = 2.0;
    o.step = 0.01;
    o.explosion_threshold = 5.0;
    o.noise = NoiseMode::Disabled;
    const auto p = simulate_path(zero_drift(1), spec, point(0.0, 4.0), o, StreamKey(1, "x"), 0);
    CHECK(p.exploded);
    CHECK(p.explosion_time == Approx(1.25).margin(0.011));
    CHECK(p.times.back() < p.explosion_time);
}

TEST_CASE("drift truncation is recorded", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = 0.1;
    o.step = 0.01;
    o.noise = NoiseMode::Disabled;
    o.truncation_radius = 1.0;
    const auto model = builtin_drift("harmonic_damped");
    CHECK(simulate_path(model, spec, point(3.0, 0.0), o, StreamKey(1, "x"), 0).truncation_hit);
    CHECK_FALSE(simulate_path(model, spec, point(0.1, 0.0), o, StreamKey(1, "x"), 0).truncation_hit);
}

TEST_CASE("Gronwall envelope holds pathwise", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    SimulationOptions o;
    o.horizon = 1.0;
    o.step = 0.01;
    o.paths = 1000;
    SECTION("free flight and free noise with C = 0 and C = 1")
    {
        const auto batch = simulate(zero_drift(1), spec, point(0.5, -1.0), o, StreamKey(5, "g0"));
        for (double C : {0.0, 1.0}) {
            for (const auto& e : gronwall_envelope(batch, C)) CHECK(e.holds);
        }
        o.noise = NoiseMode::Disabled;
        o.paths = 1;
        const auto det = simulate(zero_drift(1), spec, point(0.5, -1.0), o, StreamKey(5, "g0"));
        CHECK(gronwall_envelope(det, 1.0)[0].holds);
    }
    SECTION("velocity_threshold with its declared constant")
    {
        const auto model = builtin_drift("velocity_threshold");
        const auto batch = simulate(model, spec, point(0.5, 2.0), o, StreamKey(5, "g1"));
        std::size_t ok = 0;
        for (const auto& e : gronwall_envelope(batch, *model.growth_constant)) ok += e.holds;
        CHECK(ok == batch.paths.size());
    }
}

TEST_CASE("displacement probe", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto model = builtin_drift("harmonic_damped");
    ProbeOptions po;
    po.paths = 4000;
    const std::vector<double> ts{0.0, 0.01, 0.02, 0.03, 0.05, 0.07, 0.1};
    const State lo = point(-0.5, -1.0), hi = point(0.5, 1.0);
    // At eps = 0.1 the whole range t <= 0.1 is in the jump-dominated regime.
    const auto tab = displacement_probe(model, spec, lo, hi, 0.1, ts, po, StreamKey(9, "disp"));
    REQUIRE(tab.starts.size() == 9);
    REQUIRE(tab.rows.size() == ts.size());
    CHECK(tab.rows[0].probability == 0.0);
    CHECK(tab.slope > 0);
    CHECK(tab.linear_envelope_holds);
    const auto half = displacement_probe(model, spec, lo, hi, 0.05, ts, po, StreamKey(9, "disp"));
    for (std::size_t i = 0; i < ts.size(); ++i) CHECK(half.rows[i].probability >= tab.rows[i].probability);
}

TEST_CASE("step refinement changes bounded means by less than noise", "[integrator]")
{
    StableNoiseSpec spec(1.5, 1);
    const auto model = builtin_drift("velocity_threshold");
    SimulationOptions o;
    o.horizon = 1.0;
    o.paths = 20000;
    auto mean_of = [&](double step) {
        o.step = step;
        const auto batch = simulate(model, spec, point(0.0, 0.5), o, StreamKey(21, "weak"));
        std::vector<double> f;
        for (const auto& p : batch.paths) f.push_back(std::atan(p.states.back().x[0]));
        return mean_estimate(f);
    };
    const auto a = mean_of(0.02), b = mean_of(0.01);
    CHECK(std::abs(a.mean - b.mean) <= 3 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("merged grid", "[integrator]")
{
    const auto g = merged_time_grid(1.0, 0.25, {0.3, 0.5, 2.0});
    const std::vector<double> want{0.0, 0.25, 0.3, 0.5, 0.75, 1.0};
    REQUIRE(g.size() == want.size());
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == Approx(want[i]));
}
