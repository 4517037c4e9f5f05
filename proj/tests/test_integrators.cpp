#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "mctangent/errors.hpp"
#include "mctangent/integrators.hpp"
#include "mctangent/pde.hpp"
#include "mctangent/rng.hpp"
#include "oracles.hpp"

using namespace mct;

namespace {

Field decay(std::span<const double> u) {
  Field out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = -u[i];
  return out;
}

Field zero_fn(std::span<const double> u) { return Field(u.size(), 0.0); }

Tensor zero_jac(std::span<const double> u) { return Tensor({u.size(), u.size()}); }

Field random_field(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Field f(n);
  rng.fill_normal(f);
  return f;
}

}  // namespace

TEST_SUITE("integrators") {
  TEST_CASE("forward Euler examples") {
    const Field u{1, 2};
    CHECK(step_fe(decay, u, 0.0) == u);
    const Field v = step_fe(decay, u, 0.1);
    CHECK(v[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(1.8).epsilon(1e-15));

    const std::size_t n = 16;
    const auto truth = TruthTangent::advection(Grid{1, n}, 1.0);
    const Field x = random_field(n, 1);
    const Field s = step_fe([&](std::span<const double> y) { return truth.eval(y); }, x, 1.0 / n);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(s[(j + 1) % n] - x[j]) < 1e-12);
  }

  TEST_CASE("Adams-Bashforth examples") {
    const Field u{0.3, -0.4};
    CHECK(step_ab2(zero_fn, Field{1, 1}, u, 0.1) == u);
    auto constant = [](std::span<const double> y) { return Field(y.size(), 2.0); };
    const Field c = step_ab2(constant, Field{5, 5}, u, 0.1);
    CHECK(c[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(c[1] == doctest::Approx(-0.2).epsilon(1e-14));
    CHECK(step_ab2(decay, Field{1.0}, Field{0.9}, 0.1)[0] == doctest::Approx(0.815).epsilon(1e-14));
  }

  TEST_CASE("Heun examples") {
    CHECK(step_rk2(zero_fn, Field{1, 2}, 0.3) == Field{1, 2});
    CHECK(step_rk2(decay, Field{1.0}, 0.1)[0] == doctest::Approx(0.905).epsilon(1e-15));

    const std::size_t n = 5;
    Tensor a({n, n});
    Rng rng(2);
    rng.fill_normal(a.data());
    const double dt = 0.07;
    const Field u = random_field(n, 3);
    auto lin = [&](std::span<const double> y) { return oracle::matvec(a, y); };
    const Field got = step_rk2(lin, u, dt);
    const Field au = oracle::matvec(a, u);
    const Field aau = oracle::matvec(a, au);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(got[i] - (u[i] + dt * au[i] + 0.5 * dt * dt * aau[i])) < 1e-12);
  }

  TEST_CASE("backward Euler examples") {
    NewtonReport rep;
    const Field u{2, 4};
    auto jac = [](std::span<const double> y) {
      Tensor j({y.size(), y.size()});
      for (std::size_t i = 0; i < y.size(); ++i) j.at(i, i) = -1.0;
      return j;
    };
    CHECK(step_be(decay, jac, u, 0.0, {}, &rep) == u);
    CHECK(rep.iterations == 0);
    const Field w = step_be(decay, jac, u, 1.0, {}, &rep);
    CHECK(std::abs(w[0] - 1.0) < 1e-12);
    CHECK(std::abs(w[1] - 2.0) < 1e-12);
    CHECK(rep.iterations <= 3);
    CHECK(rep.residual <= 1e-10);
  }

  TEST_CASE("backward Euler matches the closed-form linear implicit solve") {
    const std::size_t n = 6;
    Tensor wm({n, n});
    Rng rng(4);
    rng.fill_normal(wm.data(), 0.5);
    const Field b = random_field(n, 5);
    const Field u = random_field(n, 6);
    const double dt = 0.3;
    auto f = [&](std::span<const double> y) {
      Field out = oracle::matvec(wm, y);
      for (std::size_t i = 0; i < n; ++i) out[i] += b[i];
      return out;
    };
    NewtonReport rep;
    const Field w = step_be(f, [&](std::span<const double>) { return wm; }, u, dt, {}, &rep);
    CHECK(rep.iterations <= 3);
    // Residual of (I - dt W) w = u + dt b, checked directly.
    const Field ww = oracle::matvec(wm, w);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(w[i] - dt * ww[i] - u[i] - dt * b[i]) < 1e-12);
  }

  TEST_CASE("backward Euler is bounded for upwind advection at any step") {
    const std::size_t n = 32;
    const auto truth = TruthTangent::advection(Grid{1, n}, 1.0);
    const Field u = random_field(n, 7);
    auto f = [&](std::span<const double> y) { return truth.eval(y); };
    auto j = [&](std::span<const double> y) { return truth.jacobian(y); };
    for (double dt : {0.01, 0.1, 1.0, 10.0}) {
      const Field w = step_be(f, j, u, dt);
      CHECK(norm_inf(w) <= norm_inf(u) + 1e-10);
    }
  }

  TEST_CASE("backward Euler error paths") {
    auto singular_jac = [](std::span<const double> y) {
      Tensor j({y.size(), y.size()});
      for (std::size_t i = 0; i < y.size(); ++i) j.at(i, i) = 1.0;
      return j;
    };
    auto lin = [](std::span<const double> y) { return Field(y.begin(), y.end()); };
    CHECK_THROWS_AS(step_be(lin, singular_jac, Field{1.0, 2.0}, 1.0), LinearSolveError);

    auto cubic = [](std::span<const double> y) {
      Field out(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) out[i] = -y[i] * y[i] * y[i];
      return out;
    };
    auto cubic_jac = [](std::span<const double> y) {
      Tensor j({y.size(), y.size()});
      for (std::size_t i = 0; i < y.size(); ++i) j.at(i, i) = -3.0 * y[i] * y[i];
      return j;
    };
    NewtonOptions one;
    one.max_iterations = 1;
    CHECK_THROWS_AS(step_be(cubic, cubic_jac, Field{3.0}, 1.0, one), ImplicitSolveError);
    try {
      step_be(cubic, cubic_jac, Field{3.0}, 1.0, one);
    } catch (const ImplicitSolveError& e) {
      CHECK(e.residual() > 1e-10);
    }
  }

  TEST_CASE("every scheme keeps a zero slope fixed") {
    const Field u0 = random_field(7, 8);
    for (Scheme s : {Scheme::FE, Scheme::AB2, Scheme::RK2, Scheme::BE}) {
      const auto res = rollout({s, {}}, zero_fn, zero_jac, u0, 0.1, 20);
      REQUIRE(res.trajectory.states.size() == 21);
      for (const auto& x : res.trajectory.states) CHECK(x == u0);
      CHECK_FALSE(res.diverged_at.has_value());
    }
  }

  TEST_CASE("rollout basics") {
    const Field u0{1.0, -1.0};
    const auto r0 = rollout({}, decay, {}, u0, 0.1, 0);
    CHECK(r0.trajectory.states.size() == 1);
    CHECK(r0.trajectory.dt == 0.1);

    const auto ab = rollout({Scheme::AB2, {}}, decay, {}, Field{1.0}, 0.1, 2);
    CHECK(ab.trajectory.states[1][0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(ab.trajectory.states[2][0] == doctest::Approx(0.815).epsilon(1e-14));

    auto grow = [](std::span<const double> y) {
      Field out(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) out[i] = 100.0 * y[i];
      return out;
    };
    const auto div = rollout({}, grow, {}, u0, 1.0, 50);
    REQUIRE(div.diverged_at.has_value());
    CHECK(*div.diverged_at == 3);
    CHECK(div.trajectory.states.size() == 3);

    auto nan = [](std::span<const double> y) { return Field(y.size(), std::numeric_limits<double>::quiet_NaN()); };
    const auto dn = rollout({}, nan, {}, u0, 1.0, 5);
    REQUIRE(dn.diverged_at.has_value());
    CHECK(*dn.diverged_at == 1);

    const auto be = rollout({Scheme::BE, {}}, decay,
                            [](std::span<const double> y) {
                              Tensor j({y.size(), y.size()});
                              for (std::size_t i = 0; i < y.size(); ++i) j.at(i, i) = -1.0;
                              return j;
                            },
                            u0, 0.5, 3);
    CHECK(be.residuals.size() == 3);
    for (double r : be.residuals) CHECK(r <= 1e-10);
  }

  TEST_CASE("rollout is deterministic") {
    const std::size_t n = 16;
    const auto truth = TruthTangent::advection(Grid{1, n}, 1.0);
    const Field u0 = random_field(n, 9);
    auto f = [&](std::span<const double> y) { return truth.eval(y); };
    const auto a = rollout({Scheme::RK2, {}}, f, {}, u0, 0.01, 30);
    const auto b = rollout({Scheme::RK2, {}}, f, {}, u0, 0.01, 30);
    CHECK(a.trajectory.states == b.trajectory.states);
  }

  TEST_CASE("forward Euler blows up beyond the CFL limit where backward Euler does not") {
    const std::size_t n = 32;
    const auto truth = TruthTangent::advection(Grid{1, n}, 1.0);
    const Field u0 = random_field(n, 10);
    auto f = [&](std::span<const double> y) { return truth.eval(y); };
    auto j = [&](std::span<const double> y) { return truth.jacobian(y); };
    const double dt = 5.0 / n;
    const auto fe = rollout({}, f, j, u0, dt, 40);
    CHECK(fe.diverged_at.has_value());
    const auto be = rollout({Scheme::BE, {}}, f, j, u0, dt, 40);
    CHECK_FALSE(be.diverged_at.has_value());
    for (const auto& x : be.trajectory.states) CHECK(norm_inf(x) <= norm_inf(u0) + 1e-9);
  }

  TEST_CASE("scheme names") {
    CHECK(parse_scheme("BE") == Scheme::BE);
    CHECK(parse_scheme("rk2") == Scheme::RK2);
    CHECK_THROWS_AS(parse_scheme("rk4"), ValidationError);
  }
}
