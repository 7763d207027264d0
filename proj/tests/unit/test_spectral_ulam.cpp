#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "kinlevy/spectral_ulam.hpp"

using namespace kinlevy;
using Catch::Approx;

TEST_CASE("sparse matrix basics", "[spectral_ulam]")
{
    const auto K = SparseMatrix::from_dense({{0.5, 0.0, 0.25}, {0.0, 0.0, 0.0}, {0.1, 0.2, 0.3}});
    CHECK(K.n == 3);
    CHECK(K.rows[1].empty());
    CHECK(K.row_sum(0) == Approx(0.75));
    const auto y = K.multiply({1.0, 2.0, 3.0});
    CHECK(y[0] == Approx(1.25));
    CHECK(y[2] == Approx(1.4));
    const auto z = K.left_multiply({1.0, 2.0, 3.0});
    CHECK(z[0] == Approx(0.8));
    CHECK(z[1] == Approx(0.6));
    CHECK(z[2] == Approx(1.15));
    CHECK_THROWS_AS(SparseMatrix::from_dense({{1.0, 2.0}}), Error);
    CHECK_THROWS_AS(SparseMatrix::from_dense({{-1.0}}), Error);
}

TEST_CASE("eigen triple of small matrices", "[spectral_ulam]")
{
    SECTION("symmetric 2x2")
    {
        const auto e = eigen_triple(SparseMatrix::from_dense({{0.5, 0.25}, {0.25, 0.5}}));
        CHECK(e.rho == Approx(0.75).margin(1e-9));
        CHECK(e.left_vec[0] == Approx(0.5).margin(1e-9));
        CHECK(e.left_vec[1] == Approx(0.5).margin(1e-9));
        CHECK(e.right_vec[0] == Approx(e.right_vec[1]).epsilon(1e-9));
        CHECK(e.lambda_ulam == Approx(-std::log(0.75)).margin(1e-9));
        REQUIRE(e.moduli.size() >= 2);
        CHECK(e.moduli[1] == Approx(0.25).margin(1e-6));
    }
    SECTION("identity")
    {
        const auto e = eigen_triple(SparseMatrix::from_dense({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
        CHECK(e.rho == Approx(1.0).margin(1e-12));
        for (double w : e.left_vec) CHECK(w == Approx(1.0 / 3.0).margin(1e-12));
    }
    SECTION("diagonal")
    {
        const auto e = eigen_triple(SparseMatrix::from_dense({{0.5, 0.0}, {0.0, 0.3}}), 0.5);
        CHECK(e.rho == Approx(0.5).margin(1e-9));
        CHECK(e.left_vec[0] == Approx(1.0).margin(1e-6));
        CHECK(e.left_vec[1] == Approx(0.0).margin(1e-6));
        CHECK(e.lambda_ulam == Approx(-std::log(0.5) / 0.5).margin(1e-9));
    }
    SECTION("leading block of a reducible matrix")
    {
        const auto e = eigen_triple(SparseMatrix::from_dense({{0.6, 0.1, 0.1, 0.0},
                                                               {0.1, 0.6, 0.1, 0.0},
                                                               {0.0, 0.0, 0.0, 0.5},
                                                               {0.0, 0.0, 0.0, 0.0}}));
        CHECK(e.rho == Approx(0.7).margin(1e-8));
    }
    SECTION("random positive matrix, left vector is a probability eigenvector")
    {
        RandomStream rs(3, 4, 5);
        std::vector<std::vector<double>> d(6, std::vector<double>(6));
        for (auto& row : d) {
            double s = 0.0;
            for (double& x : row) s += (x = rs.uniform());
            for (double& x : row) x *= 0.9 / s;
        }
        const auto K = SparseMatrix::from_dense(d);
        const auto e = eigen_triple(K);
        CHECK(e.rho == Approx(0.9).margin(1e-9));
        const double total = std::accumulate(e.left_vec.begin(), e.left_vec.end(), 0.0);
        CHECK(total == Approx(1.0).margin(1e-12));
        const auto lk = K.left_multiply(e.left_vec);
        const auto kr = K.multiply(e.right_vec);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(e.left_vec[i] >= 0);
            CHECK(lk[i] == Approx(e.rho * e.left_vec[i]).margin(1e-9));
            CHECK(kr[i] == Approx(e.rho * e.right_vec[i]).margin(1e-9));
        }
    }
}

TEST_CASE("Ulam rows are exact frequencies", "[spectral_ulam]")
{
    StableNoiseSpec spec(1.5, 1);
    UlamOptions o;
    o.x_cells = 8;
    o.v_cells = 8;
    o.samples_per_cell = 300;
    const auto model = builtin_drift("harmonic_damped");
    const auto I = Domain::interval(-1, 1);
    const auto op = build_ulam(model, spec, I, o, StreamKey(1, "ulam"));
    REQUIRE(op.K.n == 64);
    for (std::size_t i = 0; i < op.K.n; ++i) {
        CHECK(op.K.row_sum(i) + op.escape_mass(i) == Approx(1.0).margin(1e-12));
        for (const auto& [j, w] : op.K.rows[i]) {
            CHECK(w >= 0);
            // Multiples of 1 / samples_per_cell.
            CHECK(std::abs(w * 300 - std::round(w * 300)) < 1e-9);
        }
    }
    o.threads = 3;
    const auto again = build_ulam(model, spec, I, o, StreamKey(1, "ulam"));
    CHECK(again.K.rows == op.K.rows);

    o.dt = 0.02;
    CHECK_THROWS_AS(build_ulam(model, spec, I, o, StreamKey(1, "ulam")), Error);
    o.dt = 0.25;
    CHECK_THROWS_AS(build_ulam(model, spec, Domain::box(Vec{-INFINITY}, Vec{1.0}), o, StreamKey(1, "ulam")), Error);
}

TEST_CASE("huge box is nearly conservative", "[spectral_ulam]")
{
    StableNoiseSpec spec(1.5, 1);
    UlamOptions o;
    o.x_cells = 8;
    o.v_cells = 8;
    o.dt = 0.05;
    o.step = 0.01;
    o.samples_per_cell = 500;
    const auto op = build_ulam(zero_drift(1), spec, Domain::interval(-1e3, 1e3), o, StreamKey(2, "box"));
    const auto e = eigen_triple(op.K, o.dt);
    CHECK(e.rho > 0.99);
    CHECK(e.rho <= 1.0);
}

TEST_CASE("benchmark spectrum and compactness profile", "[spectral_ulam]")
{
    StableNoiseSpec spec(1.5, 1);
    UlamOptions o;
    o.samples_per_cell = 400;
    const auto op = build_ulam(builtin_drift("harmonic_damped"), spec, Domain::interval(-1, 1), o, StreamKey(3, "b"));
    const auto e = eigen_triple(op.K, o.dt);
    CHECK(e.rho > 0);
    CHECK(e.rho < 1);
    CHECK(e.lambda_ulam > 0);
    const auto rep = compactness_diagnostic(op, e);
    CHECK(rep.bands_nonincreasing);
    REQUIRE(rep.bands.size() >= 3);
    for (std::size_t i = 1; i < rep.bands.size(); ++i) CHECK(rep.bands[i].mass <= rep.bands[i - 1].mass);
    CHECK(rep.bands.back().mass < 0.01);
    REQUIRE(e.moduli.size() >= 5);
    CHECK(e.moduli[4] < e.moduli[0]);
    for (std::size_t i = 1; i < e.moduli.size(); ++i) CHECK(e.moduli[i] <= e.moduli[i - 1] + 1e-12);
}

TEST_CASE("bump function", "[spectral_ulam]")
{
    const auto f = bump_function(State{Vec{0.5}, Vec{-1.0}}, 0.5, 2.0);
    CHECK(f.value(State{Vec{0.5}, Vec{-1.0}}) == Approx(1.0));
    CHECK(f.value(State{Vec{1.0}, Vec{-1.0}}) == 0.0);
    CHECK(f.value(State{Vec{0.5}, Vec{1.5}}) == 0.0);
    // Numerical derivative stays under the declared bound.
    double worst = 0.0;
    for (double s = -0.99; s < 0.99; s += 0.01) {
        const double h = 1e-6;
        const double d = (f.value(State{Vec{0.5 + 0.5 * s + h}, Vec{-1.0}}) -
                          f.value(State{Vec{0.5 + 0.5 * s - h}, Vec{-1.0}})) / (2 * h);
        worst = std::max(worst, std::abs(d));
    }
    CHECK(worst <= f.grad_x_bound * (1 + 1e-6));
    CHECK_THROWS_AS(bump_function(State{Vec{0.0}, Vec{0.0}}, 0.0, 1.0), Error);
}

TEST_CASE("Duhamel residual with no drift is exactly zero", "[spectral_ulam]")
{
    StableNoiseSpec spec(1.5, 1);
    DuhamelOptions o;
    o.paths = 2000;
    const auto f = bump_function(State{Vec{0.0}, Vec{0.0}}, 1.0, 2.0);
    const auto r = duhamel_residual(zero_drift(1), spec, f, State{Vec{0.0}, Vec{0.0}}, 1.0, o, StreamKey(1, "d0"));
    CHECK(r.correction == 0.0);
    CHECK(r.residual == Approx(0.0).margin(1e-14));
    CHECK(r.lhs == Approx(r.semigroup_term).margin(1e-14));
}

TEST_CASE("reversing the drift reverses the correction", "[spectral_ulam]")
{
    StableNoiseSpec spec(1.5, 1);
    DuhamelOptions o;
    o.paths = 4000;
    const auto f = bump_function(State{Vec{0.0}, Vec{0.0}}, 1.0, 2.0);
    const State x0{Vec{0.3}, Vec{0.2}};
    const auto plus = duhamel_residual(builtin_drift("tanh_field", {{"amplitude", 0.2}}), spec, f, x0, 1.0, o,
                                       StreamKey(2, "sign"));
    const auto minus = duhamel_residual(builtin_drift("tanh_field", {{"amplitude", -0.2}}), spec, f, x0, 1.0, o,
                                        StreamKey(2, "sign"));
    INFO("plus=" << plus.correction << " minus=" << minus.correction);
    CHECK(plus.correction != 0.0);
    CHECK(std::abs(plus.correction + minus.correction) <=
          3 * std::hypot(plus.correction_se, minus.correction_se) + 1e-12);
}

TEST_CASE("Duhamel argument checks", "[spectral_ulam]")
{
    const auto f = bump_function(State{Vec{0.0}, Vec{0.0}}, 1.0, 2.0);
    const State x0{Vec{0.0}, Vec{0.0}};
    DuhamelOptions o;
    o.paths = 10;
    auto code_of = [&](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return std::string("none");
    };
    const StableNoiseSpec spec(1.5, 1);
    CHECK(code_of([&] { duhamel_residual(builtin_drift("harmonic_damped"), spec, f, x0, 1.0, o, StreamKey(1, "e")); }) ==
          "unbounded_drift");
    CHECK(code_of([&] {
              duhamel_residual(builtin_drift("tanh_field", {{"amplitude", 0.9}}), spec, f, x0, 1.0, o, StreamKey(1, "e"));
          }) == "drift_too_large");
    CHECK(code_of([&] {
              duhamel_residual(zero_drift(1), StableNoiseSpec(0.9, 1), f, x0, 1.0, o, StreamKey(1, "e"));
          }) == "alpha_too_small");
    o.s_points = 40;
    CHECK(code_of([&] { duhamel_residual(zero_drift(1), spec, f, x0, 1.0, o, StreamKey(1, "e")); }) == "bad_grid");
    o.s_points = 41;
    o.fd_order = 3;
    CHECK(code_of([&] { duhamel_residual(zero_drift(1), spec, f, x0, 1.0, o, StreamKey(1, "e")); }) == "bad_fd_order");
}
