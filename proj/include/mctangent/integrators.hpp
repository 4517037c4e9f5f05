#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mctangent/field.hpp"
#include "mctangent/tensor.hpp"

namespace mct {

using TangentFn = std::function<Field(std::span<const double>)>;
using JacobianFn = std::function<Tensor(std::span<const double>)>;

enum class Scheme { FE, AB2, RK2, BE };

std::string_view scheme_name(Scheme s) noexcept;
/// Accepts fe, ab2, rk2, be (any case).
Scheme parse_scheme(std::string_view name);

struct NewtonOptions {
  std::size_t max_iterations = 50;
  double tolerance = 1e-10;  // absolute, on the 2-norm of w - u - dt f(w)
};

struct SchemeSpec {
  Scheme kind = Scheme::FE;
  NewtonOptions newton;
};

/// Max-norm above which a rollout is labelled divergent.
inline constexpr double kDivergenceThreshold = 1e6;

struct NewtonReport {
  std::size_t iterations = 0;
  double residual = 0.0;
};

Field step_fe(const TangentFn& f, std::span<const double> u, double dt);
Field step_ab2(const TangentFn& f, std::span<const double> u_prev, std::span<const double> u, double dt);
Field step_rk2(const TangentFn& f, std::span<const double> u, double dt);
/// Solves w = u + dt f(w) by Newton from w = u. Throws ImplicitSolveError when
/// the tolerance is not met and LinearSolveError on a singular Newton matrix.
Field step_be(const TangentFn& f, const JacobianFn& jac, std::span<const double> u, double dt,
              const NewtonOptions& opts = {}, NewtonReport* report = nullptr);

struct RolloutResult {
  Trajectory trajectory;
  /// Step whose state was non-finite or exceeded the threshold; the
  /// trajectory keeps only the states before it.
  std::optional<std::size_t> diverged_at;
  /// Backward Euler only: final Newton residual per step.
  std::vector<double> residuals;
};

RolloutResult rollout(const SchemeSpec& scheme, const TangentFn& f, const JacobianFn& jac,
                      std::span<const double> u0, double dt, std::size_t steps, Grid grid = {});
/// Iterates a next-state map (direct-learning baseline).
RolloutResult rollout_map(const TangentFn& next, std::span<const double> u0, std::size_t steps, double dt,
                          Grid grid = {});

}  // namespace mct
