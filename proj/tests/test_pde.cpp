#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "mctangent/errors.hpp"
#include "mctangent/field.hpp"
#include "mctangent/pde.hpp"
#include "mctangent/rng.hpp"
#include "oracles.hpp"
#include "pde_oracles.hpp"

using namespace mct;
using oracle::burgers_brute;
using oracle::ns_brute;

namespace {

constexpr double kPi = std::numbers::pi;

Field random_field(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Field f(n);
  rng.fill_normal(f, scale);
  return f;
}

double max_abs(const Field& a) { return norm_inf(a); }

}  // namespace

TEST_SUITE("pde_truth") {
  TEST_CASE("advection tangent examples") {
    CHECK(max_abs(advection_tangent(Field(8, 3.0), 1.0, 0.125)) == 0.0);
    const Field g = advection_tangent(Field{1, 0, 0, 0}, 1.0, 0.25);
    CHECK(g == Field{-4, 4, 0, 0});
  }

  TEST_CASE("advection tangent equals the dense upwind matrix product") {
    const std::size_t n = 32;
    const double h = 1.0 / n;
    const Field u = random_field(n, 1);
    const Tensor a = advection_matrix(n, 1.3, h);
    // Independent dense assembly.
    Tensor b({n, n});
    for (std::size_t j = 0; j < n; ++j) {
      b.at(j, j) = -1.3 / h;
      b.at(j, (j + n - 1) % n) = 1.3 / h;
    }
    CHECK(a == b);
    CHECK(oracle::max_abs_diff(advection_tangent(u, 1.3, h), oracle::matvec(b, u)) < 1e-12 * norm_inf(u) / h);
    const auto truth = TruthTangent::advection(Grid{1, n}, 1.3);
    CHECK(truth.jacobian(u) == b);
  }

  TEST_CASE("advection tangent sums to zero") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Field g = advection_tangent(random_field(64, s), 1.0, 1.0 / 64);
      double acc = 0.0;
      for (double x : g) acc += x;
      CHECK(std::abs(acc) < 1e-9);
    }
  }

  TEST_CASE("unit CFL reference solve is an exact circular shift") {
    const std::size_t n = 16;
    const auto truth = TruthTangent::advection(Grid{1, n}, 1.0);
    const Field u0 = random_field(n, 2);
    const std::size_t m = 5;
    const auto traj = solve_reference(truth, u0, m, static_cast<double>(m) / n);
    REQUIRE(traj.states.size() == m + 1);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(traj.states[m][(j + m) % n] - u0[j]) < 1e-12);
  }

  TEST_CASE("reference solve edge cases") {
    const auto truth = TruthTangent::advection(Grid{1, 16}, 1.0);
    const Field u0 = random_field(16, 3);
    const auto t0 = solve_reference(truth, u0, 0, 1.0);
    CHECK(t0.states.size() == 1);
    CHECK(t0.states[0] == u0);
    CHECK_THROWS_AS(solve_reference(truth, u0, 2, 1.0), StabilityError);
    CHECK_THROWS_AS(TruthTangent::advection(Grid{1, 16}, -1.0), ValidationError);
    CHECK_THROWS_AS(TruthTangent::burgers(Grid{2, 16}, 0.0), ValidationError);
    CHECK_THROWS_AS(TruthTangent::navier_stokes(Grid{2, 12}, 1e-3, {}), ValidationError);
  }

  TEST_CASE("Burgers constants are steady") {
    const Grid g{2, 8};
    const auto [du, dv] = burgers_tangent(Field(64, 0.7), Field(64, -1.2), 0.01, g);
    CHECK(max_abs(du) == 0.0);
    CHECK(max_abs(dv) == 0.0);
  }

  TEST_CASE("Burgers diffusion of a single Fourier mode") {
    const std::size_t n = 16;
    const Grid g{2, n};
    const double h = g.h(), nu = 0.01;
    Field v(n * n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) v[y * n + x] = std::sin(2 * kPi * x * h);
    const auto [du, dv] = burgers_tangent(Field(n * n, 0.0), v, nu, g);
    CHECK(max_abs(du) == 0.0);
    const double eig = -(2.0 - 2.0 * std::cos(2 * kPi * h)) / (h * h);
    for (std::size_t i = 0; i < n * n; ++i) {
      CHECK(dv[i] == doctest::Approx(nu * eig * v[i]).epsilon(1e-12).scale(1.0));
      CHECK(std::abs(dv[i] + 4 * kPi * kPi * nu * v[i]) < 4 * kPi * kPi * nu * 4 * kPi * kPi * h * h / 12 * 1.01);
    }
  }

  TEST_CASE("Burgers tangent matches the brute-force stencil") {
    const std::size_t n = 12;
    const Grid g{2, n};
    for (std::uint64_t s = 0; s < 4; ++s) {
      const Field u = random_field(n * n, 10 + s), v = random_field(n * n, 20 + s);
      const auto [du, dv] = burgers_tangent(u, v, 0.02, g);
      const auto [bu, bv] = burgers_brute(u, v, 0.02, n);
      const double scale = std::max(max_abs(bu), max_abs(bv));
      CHECK(oracle::max_abs_diff(du, bu) <= 1e-12 * scale);
      CHECK(oracle::max_abs_diff(dv, bv) <= 1e-12 * scale);
    }
  }

  TEST_CASE("Burgers diffusion part is negative semidefinite") {
    const Grid g{2, 10};
    for (std::uint64_t s = 0; s < 5; ++s) {
      const Field u = random_field(100, 30 + s), v = random_field(100, 40 + s);
      const auto full = burgers_tangent(u, v, 0.05, g).first;
      const auto conv = burgers_tangent(u, v, 0.0, g).first;
      CHECK(dot(u, difference(full, conv)) <= 0.0);
    }
  }

  TEST_CASE("Burgers u-only state matches the full system with v = 1") {
    const Grid g{2, 8};
    const Field u = random_field(64, 5);
    const auto reduced = TruthTangent::burgers(g, 0.01);
    const auto full = TruthTangent::burgers(g, 0.01, true);
    Field uv = u;
    uv.insert(uv.end(), 64, 1.0);
    const Field gf = full.eval(uv);
    const Field gr = reduced.eval(u);
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(gf[i] == gr[i]);
      CHECK(gf[64 + i] == 0.0);
    }
  }

  TEST_CASE("truth Jacobians are consistent with eval, JVP and VJP") {
    std::vector<TruthTangent> cases{
        TruthTangent::advection(Grid{1, 16}, 1.0),
        TruthTangent::burgers(Grid{2, 6}, 0.02),
        TruthTangent::burgers(Grid{2, 6}, 0.02, true),
        TruthTangent::navier_stokes(Grid{2, 8}, 1e-3, ns_forcing(Grid{2, 8})),
    };
    for (std::size_t c = 0; c < cases.size(); ++c) {
      const auto& t = cases[c];
      const std::size_t m = t.state_size();
      // Offset away from zero so the Burgers upwind switches do not flip under FD.
      Field u = random_field(m, 50 + c, 0.3);
      if (t.problem() == Problem::Burgers)
        for (double& x : u) x += x >= 0 ? 0.5 : -0.5;
      const Field d = random_field(m, 60 + c), gdir = random_field(m, 70 + c);
      const Tensor jac = t.jacobian(u);
      CHECK(oracle::rel_error(t.jvp(u, d), oracle::matvec(jac, d)) < 1e-12);
      CHECK(oracle::rel_error(t.vjp(u, gdir), oracle::matvec(transpose(jac), gdir)) < 1e-12);
      CHECK(dot(gdir, t.jvp(u, d)) == doctest::Approx(dot(d, t.vjp(u, gdir))).epsilon(1e-11));
      Field x = u;
      auto f = [&] { return dot(gdir, t.eval(x)); };
      CHECK(oracle::rel_error(oracle::fd_gradient(f, x, 1e-6), t.vjp(u, gdir)) < 1e-6);
    }
  }

  TEST_CASE("Navier-Stokes tangent trivial cases") {
    const Grid g{2, 16};
    CHECK(max_abs(ns_vorticity_tangent(Field(256, 0.0), 1e-3, Field(256, 0.0), g)) == 0.0);
    const Field f = random_field(256, 7);
    const Field out = ns_vorticity_tangent(Field(256, 0.0), 1e-3, f, g);
    CHECK(oracle::max_abs_diff(out, f) == 0.0);
  }

  TEST_CASE("Navier-Stokes single mode is a Laplacian eigenfunction") {
    const std::size_t n = 16;
    const Grid g{2, n};
    const double nu = 1e-3;
    Field w(n * n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) w[y * n + x] = std::cos(2 * kPi * x * g.h()) * std::cos(2 * kPi * y * g.h());
    const Field t = ns_vorticity_tangent(w, nu, Field(n * n, 0.0), g);
    Field expect(n * n);
    for (std::size_t i = 0; i < n * n; ++i) expect[i] = -8 * kPi * kPi * nu * w[i];
    CHECK(oracle::rel_error(t, expect) < 1e-8);
  }

  TEST_CASE("Navier-Stokes tangent matches a direct-DFT implementation") {
    for (std::size_t n : {8u, 16u}) {
      const Grid g{2, n};
      const Field w = random_field(n * n, 80 + n);
      const Field f = ns_forcing(g);
      const Field got = ns_vorticity_tangent(w, 1e-3, f, g);
      const Field ref = ns_brute(w, 1e-3, f, n);
      CHECK(oracle::max_abs_diff(got, ref) <= 1e-12 * std::max(1.0, max_abs(ref)));
    }
  }

  TEST_CASE("Navier-Stokes tangent preserves zero mean without forcing") {
    const Grid g{2, 16};
    Field w = random_field(256, 9);
    const double m = mean(w);
    for (double& x : w) x -= m;
    CHECK(std::abs(mean(ns_vorticity_tangent(w, 1e-3, Field(256, 0.0), g))) < 1e-12);
  }

  TEST_CASE("Navier-Stokes single-mode decay in the reference solver") {
    const std::size_t n = 32;
    const Grid g{2, n};
    const double nu = 1e-3;
    Field w(n * n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) w[y * n + x] = std::cos(2 * kPi * x * g.h()) * std::cos(2 * kPi * y * g.h());
    const auto truth = TruthTangent::navier_stokes(g, nu, {});
    const auto traj = solve_reference(truth, w, 100, 0.1);
    const double amp = dot(traj.states.back(), w) / dot(w, w);
    const double expect = std::exp(-8 * kPi * kPi * nu * 0.1);
    CHECK(std::abs(amp - expect) / expect < 0.01);
  }

  TEST_CASE("downsample examples") {
    Trajectory t;
    t.grid = Grid{1, 8};
    t.dt = 0.5;
    for (int k = 0; k < 5; ++k) {
      Field s(8);
      for (int j = 0; j < 8; ++j) s[j] = 10 * k + j;
      t.states.push_back(s);
    }
    const auto same = downsample(t, 1, 1);
    CHECK(same.states == t.states);
    CHECK(same.dt == t.dt);
    const auto half = downsample(t, 2, 2);
    REQUIRE(half.states.size() == 3);
    CHECK(half.states[1] == Field{20, 22, 24, 26});
    CHECK(half.dt == 1.0);
    CHECK(half.grid.n == 4);
    CHECK_THROWS_AS(downsample(t, 3, 1), ValidationError);
    CHECK_THROWS_AS(downsample(t, 1, 3), ValidationError);

    Trajectory f;
    f.grid = Grid{2, 128};
    f.dt = 1.0;
    f.states.push_back(random_field(128 * 128, 11));
    const auto c = downsample(f, 4, 1);
    REQUIRE(c.state_size() == 32 * 32);
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) CHECK(c.states[0][i * 32 + j] == f.states[0][(4 * i) * 128 + 4 * j]);
  }

  TEST_CASE("transport initial condition") {
    const Grid g{1, 64};
    const std::vector<double> zero(5, 0.0);
    CHECK(max_abs(transport_initial(g, zero, zero)) == 0.0);
    std::vector<double> a(5, 0.0);
    a[0] = 1.0;
    const Field u = transport_initial(g, a, zero);
    for (std::size_t j = 0; j < 64; ++j) CHECK(u[j] == doctest::Approx(std::sin(2 * kPi * j / 64.0)).epsilon(1e-14));
    Rng rng(4);
    CHECK(std::abs(mean(sample_initial_transport(g, rng))) < 1e-12);
  }

  TEST_CASE("KL sampler") {
    const Grid g{2, 32};
    KLSampler burgers(g, {});
    KLSampler::Options opt;
    opt.exponentiate = false;
    KLSampler ns(g, opt);
    REQUIRE(burgers.modes().size() == 15);
    const std::vector<double> z(15, 0.0);
    for (double x : burgers.sample(z)) CHECK(x == 1.0);
    for (double x : ns.sample(z)) CHECK(x == 0.0);
    const double l10 = std::pow(7.0, 1.5) * std::pow(4 * kPi * kPi + 49.0, -2.5);
    CHECK(burgers.eigenvalue(1, 0) == doctest::Approx(l10).epsilon(1e-14));
    CHECK(l10 == doctest::Approx(2.515e-4).epsilon(1e-3));
    for (std::size_t i = 1; i < 15; ++i) CHECK(burgers.modes()[i].lambda <= burgers.modes()[i - 1].lambda);
    for (const auto& m : burgers.modes()) CHECK(m.lambda > 0.0);
    const auto& phi = burgers.eigenfunctions();
    for (std::size_t i = 0; i < 15; ++i)
      for (std::size_t j = 0; j < 15; ++j) {
        const double ip = dot(phi[i], phi[j]) / static_cast<double>(g.size());
        CHECK(std::abs(ip - (i == j ? 1.0 : 0.0)) < 1e-10);
      }
    CHECK_THROWS_AS(burgers.sample(std::vector<double>(3, 0.0)), DimensionError);
  }
}
