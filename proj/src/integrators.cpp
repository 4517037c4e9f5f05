#include "mctangent/integrators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "mctangent/errors.hpp"

namespace mct {

std::string_view scheme_name(Scheme s) noexcept {
  switch (s) {
    case Scheme::FE: return "fe";
    case Scheme::AB2: return "ab2";
    case Scheme::RK2: return "rk2";
    case Scheme::BE: return "be";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "fe") return Scheme::FE;
  if (s == "ab2") return Scheme::AB2;
  if (s == "rk2") return Scheme::RK2;
  if (s == "be") return Scheme::BE;
  throw ValidationError("unknown scheme '" + std::string(name) + "' (expected fe, ab2, rk2, be)");
}

Field step_fe(const TangentFn& f, std::span<const double> u, double dt) { return axpy(u, dt, f(u)); }

Field step_ab2(const TangentFn& f, std::span<const double> u_prev, std::span<const double> u, double dt) {
  const Field fu = f(u);
  const Field fp = f(u_prev);
  Field out(u.begin(), u.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += 1.5 * dt * fu[i] - 0.5 * dt * fp[i];
  return out;
}

Field step_rk2(const TangentFn& f, std::span<const double> u, double dt) {
  const Field k1 = f(u);
  const Field mid = axpy(u, dt, k1);
  const Field k2 = f(mid);
  Field out(u.begin(), u.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += 0.5 * dt * (k1[i] + k2[i]);
  return out;
}

Field step_be(const TangentFn& f, const JacobianFn& jac, std::span<const double> u, double dt,
              const NewtonOptions& opts, NewtonReport* report) {
  if (!(opts.tolerance > 0.0)) throw ValidationError("Newton tolerance must be positive");
  if (!jac) throw ContractError("backward Euler needs a Jacobian");
  const std::size_t n = u.size();
  Field w(u.begin(), u.end());
  Eigen::VectorXd r(n);
  auto residual = [&] {
    const Field fw = f(w);
    for (std::size_t i = 0; i < n; ++i) r[static_cast<Eigen::Index>(i)] = w[i] - u[i] - dt * fw[i];
    return r.norm();
  };
  double res = residual();
  std::size_t it = 0;
  while (!(res <= opts.tolerance)) {
    if (!std::isfinite(res) || it == opts.max_iterations) {
      if (report) *report = {it, res};
      throw ImplicitSolveError("backward Euler Newton did not converge after " + std::to_string(it) + " iterations",
                               res);
    }
    const Tensor j = jac(w);
    if (j.rows() != n || j.cols() != n) throw DimensionError("backward Euler: Jacobian shape mismatch");
    Eigen::MatrixXd a(n, n);
    for (std::size_t row = 0; row < n; ++row)
      for (std::size_t col = 0; col < n; ++col)
        a(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
            (row == col ? 1.0 : 0.0) - dt * j.at(row, col);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    if (!(lu.rcond() > 1e-14)) throw LinearSolveError("backward Euler Newton matrix is singular");
    const Eigen::VectorXd delta = lu.solve(-r);
    for (std::size_t i = 0; i < n; ++i) w[i] += delta[static_cast<Eigen::Index>(i)];
    ++it;
    res = residual();
  }
  if (report) *report = {it, res};
  return w;
}

namespace {

bool diverged(std::span<const double> u) {
  for (double x : u)
    if (!std::isfinite(x) || std::abs(x) > kDivergenceThreshold) return true;
  return false;
}

}  // namespace

RolloutResult rollout(const SchemeSpec& scheme, const TangentFn& f, const JacobianFn& jac,
                      std::span<const double> u0, double dt, std::size_t steps, Grid grid) {
  RolloutResult res;
  res.trajectory.dt = dt;
  res.trajectory.grid = grid;
  auto& states = res.trajectory.states;
  states.reserve(steps + 1);
  states.emplace_back(u0.begin(), u0.end());
  for (std::size_t k = 1; k <= steps; ++k) {
    const Field& u = states.back();
    Field next;
    switch (scheme.kind) {
      case Scheme::FE: next = step_fe(f, u, dt); break;
      case Scheme::AB2: next = k == 1 ? step_fe(f, u, dt) : step_ab2(f, states[states.size() - 2], u, dt); break;
      case Scheme::RK2: next = step_rk2(f, u, dt); break;
      case Scheme::BE: {
        NewtonReport rep;
        next = step_be(f, jac, u, dt, scheme.newton, &rep);
        res.residuals.push_back(rep.residual);
        break;
      }
    }
    if (diverged(next)) {
      res.diverged_at = k;
      break;
    }
    states.push_back(std::move(next));
  }
  return res;
}

RolloutResult rollout_map(const TangentFn& next, std::span<const double> u0, std::size_t steps, double dt,
                          Grid grid) {
  RolloutResult res;
  res.trajectory.dt = dt;
  res.trajectory.grid = grid;
  auto& states = res.trajectory.states;
  states.emplace_back(u0.begin(), u0.end());
  for (std::size_t k = 1; k <= steps; ++k) {
    Field u = next(states.back());
    if (diverged(u)) {
      res.diverged_at = k;
      break;
    }
    states.push_back(std::move(u));
  }
  return res;
}

}  // namespace mct
