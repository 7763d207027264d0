#include <catch_amalgamated.hpp>

#include <cmath>

#include "kinlevy/drift_models.hpp"

using namespace kinlevy;
using Catch::Approx;

TEST_CASE("velocity_threshold below the critical speed is the confining field", "[drift_models]")
{
    const auto m = builtin_drift("velocity_threshold", {{"gamma", 1.0}, {"v_c", 1.0}});
    for (double x : {-3.0, -0.4, 0.0, 0.7, 5.0}) {
        for (double v : {-0.5, 0.5}) {
            const Vec b = m(Vec{x}, Vec{v});
            CHECK(b[0] == Approx(-x / (1.0 + std::abs(x))).margin(1e-15));
        }
    }
    // Above v_c the friction adds -gamma v.
    const Vec b = m(Vec{0.5}, Vec{2.0});
    CHECK(b[0] == Approx(-0.5 / 1.5 - 2.0));
}

TEST_CASE("simple built-in values", "[drift_models]")
{
    const auto h = builtin_drift("harmonic_damped");
    CHECK(h(Vec{0.0}, Vec{0.0})[0] == 0.0);
    CHECK(h(Vec{1.0}, Vec{2.0})[0] == Approx(-3.0));

    const auto a = builtin_drift("anisotropic_friction", {{"spring", 0.0}});
    CHECK(a(Vec{0.3}, Vec{0.0})[0] == 0.0);

    const auto t = builtin_drift("tanh_field");
    CHECK(t(Vec{0.5}, Vec{4.0})[0] == Approx(0.2 * std::tanh(0.5)));
    REQUIRE(t.bound);
    CHECK(*t.bound == Approx(0.2));

    const auto h2 = builtin_drift("harmonic_damped", {}, 2);
    const Vec b2 = h2(Vec{1.0, -1.0}, Vec{0.5, 0.0});
    CHECK(b2[0] == Approx(-1.5));
    CHECK(b2[1] == Approx(1.0));
}

TEST_CASE("registry errors", "[drift_models]")
{
    auto code_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return std::string("none");
    };
    CHECK(code_of([] { builtin_drift("no_such_model"); }) == "unknown_drift");
    CHECK(code_of([] { builtin_drift("velocity_threshold", {{"v_c", -1.0}}); }) == "bad_params");
    CHECK(code_of([] { builtin_drift("harmonic_damped", {{"stiffness", 1.0}}); }) == "unknown_param");
    CHECK(code_of([] { builtin_drift("harmonic_damped", {}, 7); }) == "bad_dimension");
}

TEST_CASE("custom drifts register through the extension point", "[drift_models]")
{
    register_drift("test_constant_push", {{"force", 0.3}}, [](const ParamMap& p, int dim) {
        DriftModel m;
        m.name = "test_constant_push";
        m.dim = dim;
        m.class_tag = DriftClass::Bounded;
        const double f = p.at("force");
        m.eval = [f, dim](const Vec&, const Vec&) { return Vec(dim, f); };
        m.bound = std::abs(f) * std::sqrt(static_cast<double>(dim));
        m.growth_constant = m.bound;
        return m;
    });
    const auto m = builtin_drift("test_constant_push", {{"force", -0.25}});
    CHECK(m(Vec{1.0}, Vec{1.0})[0] == -0.25);
    CHECK(drift_defaults("test_constant_push").at("force") == 0.3);
    CHECK(check_assumptions(m).passed);
}

TEST_CASE("harmonic benchmark passes every inequality, cond-U tight", "[drift_models]")
{
    const auto m = builtin_drift("harmonic_damped");
    const auto rep = check_assumptions(m);
    CHECK(rep.passed);
    CHECK(rep.points_checked == 101u * 101u);
    for (const char* name : {"U_ge_1", "cond_U_drift", "cond_U_growth", "cond_gamma_A", "cond_gamma_B2"}) {
        const auto* c = rep.find(name);
        REQUIRE(c != nullptr);
        INFO(name);
        CHECK(c->passed);
        CHECK(c->margin >= -1e-9);
    }
    // -|x|^2 = -2 (1 + |x|^2/2) + 2 holds with equality.
    CHECK(rep.find("cond_U_drift")->margin == Approx(0.0).margin(1e-9));
    CHECK(rep.find("cond_U_growth")->margin == Approx(1.0).margin(1e-9));
}

TEST_CASE("bounded drift declared with linear growth passes", "[drift_models]")
{
    auto m = builtin_drift("piecewise_field");
    m.class_tag = DriftClass::LinearGrowth;
    m.growth_constant = *m.bound;
    CHECK(check_assumptions(m).passed);
}

TEST_CASE("a false bound is caught with a witness", "[drift_models]")
{
    auto m = builtin_drift("harmonic_damped");
    m.growth_constant = 0.5;
    const auto rep = check_assumptions(m);
    CHECK_FALSE(rep.passed);
    const auto* c = rep.find("linear_growth");
    REQUIRE(c);
    CHECK_FALSE(c->passed);
    CHECK(c->margin < 0);
    const Vec b = m(c->witness.x, c->witness.v);
    CHECK(b.norm() > 0.5 * (1 + c->witness.x.norm() + c->witness.v.norm()));
}

TEST_CASE("class mismatch is a structured error", "[drift_models]")
{
    auto m = builtin_drift("velocity_threshold");
    m.class_tag = DriftClass::PerturbedGradient;
    try {
        check_assumptions(m);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == "class_mismatch");
    }
    GridSpec empty;
    empty.points_per_axis = -1;
    CHECK_THROWS_AS(check_assumptions(builtin_drift("harmonic_damped"), empty), Error);
}

TEST_CASE("grid checks skip declared discontinuities", "[drift_models]")
{
    const auto m = builtin_drift("velocity_threshold", {{"v_c", 1.0}});
    GridSpec g;
    g.R = 5.0;
    g.points_per_axis = 11;  // contains |v| = 1 exactly
    const auto rep = check_assumptions(m, g);
    CHECK(rep.points_skipped == 2u * 11u);
    CHECK(rep.passed);
}

TEST_CASE("refining the grid keeps a strict pass", "[drift_models]")
{
    const auto m = builtin_drift("double_well_damped");
    for (int n : {21, 41, 81}) {
        GridSpec g;
        g.R = 5.0;
        g.points_per_axis = n;
        INFO("n=" << n);
        CHECK(check_assumptions(m, g).passed);
    }
}

TEST_CASE("case B1 local constants are produced", "[drift_models]")
{
    auto m = builtin_drift("harmonic_damped");
    m.pgrad->theta_case = ThetaCase::B1;
    m.pgrad->C2_Theta = 1.0;
    GridSpec g;
    g.R = 4.0;
    g.points_per_axis = 41;
    const auto rep = check_assumptions(m, g);
    CHECK(rep.passed);
    REQUIRE(rep.local_constants.size() == 3);
    // |Theta| / (1 + |v|) = |v| / (1 + |v|) < 1.
    for (const auto& [r, c] : rep.local_constants) {
        CHECK(c > 0.7);
        CHECK(c < 1.0);
    }
}

TEST_CASE("admissible b on the benchmark", "[drift_models]")
{
    const auto m = builtin_drift("harmonic_damped");
    const auto ab = admissible_ab(*m.pgrad, 1.0);
    CHECK(ab.b_max == Approx(0.25).epsilon(1e-14));
    CHECK(ab.binding == "b < m2 a / 2");
    CHECK(ab.constraints.size() == 4);
    CHECK(ab.satisfied_at(0.5 * ab.b_max));
    CHECK(ab.satisfied_at(0.2499));
    CHECK_FALSE(ab.satisfied_at(0.2501));
}

TEST_CASE("admissible b properties", "[drift_models]")
{
    const auto base = *builtin_drift("harmonic_damped").pgrad;
    SECTION("b_max / 2 satisfies every constraint")
    {
        for (double a : {0.1, 0.5, 1.0, 3.0}) {
            for (auto tc : {ThetaCase::B1, ThetaCase::B2}) {
                auto pg = base;
                pg.theta_case = tc;
                const auto ab = admissible_ab(pg, a);
                INFO("a=" << a);
                CHECK(ab.satisfied_at(0.5 * ab.b_max));
            }
        }
    }
    SECTION("monotone in a")
    {
        for (double a : {0.2, 0.7, 1.0, 2.5}) CHECK(admissible_ab(base, 2 * a).b_max >= admissible_ab(base, a).b_max);
    }
    SECTION("case B1 collapses as Gamma goes to 0")
    {
        auto pg = base;
        pg.theta_case = ThetaCase::B1;
        double prev = 1e300;
        for (double G : {1e-1, 1e-2, 1e-3, 1e-4}) {
            pg.Gamma = G;
            const auto ab = admissible_ab(pg, 1.0);
            CHECK(ab.b_max == Approx(G / (1 + pg.C2_Theta)));
            CHECK(ab.b_max < prev);
            prev = ab.b_max;
        }
        pg.Gamma = 0.0;
        CHECK_THROWS_AS(admissible_ab(pg, 1.0), Error);
    }
    SECTION("case B2, q > 2")
    {
        auto pg = *builtin_drift("double_well_damped").pgrad;
        const auto ab = admissible_ab(pg, 1.0);
        CHECK(ab.b_max == Approx(0.5));
        CHECK(ab.binding == "2 b < a Gamma");
    }
}
