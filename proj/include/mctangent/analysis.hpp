#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mctangent/field.hpp"
#include "mctangent/network.hpp"
#include "mctangent/pde.hpp"
#include "mctangent/tensor.hpp"

namespace mct {

struct LinearOptimum {
  Tensor W;  // [n x n]
  Tensor b;  // [n]
};

/// Closed-form minimizer of the one-step linear loss: W* = G P P^+, b* = G (I - P P^+) mean,
/// with P the column-centred snapshot matrix. Singular values of P below
/// cutoff * sigma_max count as zero.
LinearOptimum linear_optimum(const Tensor& G, const Tensor& U0, double cutoff = 1e-10);

/// Largest singular value.
double spectral_norm(const Tensor& a);

/// e^n = ||u^n - u~^n||_2 where u~ is the forward-Euler network rollout from
/// u^0 with step dt. Entry 0 is 0; entries after a divergence are +inf.
std::vector<double> prediction_error_series(const Trajectory& truth_traj, const TangentNetwork& net, double dt);

enum class RemainderPolicy { Zero, FiniteDifference };

std::string_view remainder_policy_name(RemainderPolicy p) noexcept;
RemainderPolicy parse_remainder_policy(std::string_view name);

struct ErrorReport {
  std::vector<double> e;  // e^0..e^N
  std::vector<double> f;  // f^0 (unused, 0)..f^N
  std::vector<double> g;  // g^0 (unused, 0)..g^N
  std::vector<double> c;  // c^0..c^{N-1} as used in g^{i+1}
  std::vector<double> B;  // B^0 = 0..B^N
  RemainderPolicy policy = RemainderPolicy::Zero;
};

/// Error series and discrete Gronwall bound along the network rollout for
/// the first `steps` steps of `truth_traj` (a forward-Euler truth trajectory
/// with step dt). Matrix norms are spectral norms. With FiniteDifference, c^i
/// is dt ||G(u~+e) - G(u~) - J_G e|| / ||e|| using the measured error vector.
ErrorReport gronwall_bound(const TangentNetwork& net, const TruthTangent& truth, const Trajectory& truth_traj,
                           double dt, std::size_t steps, RemainderPolicy policy);

struct RandomizationDiagnostics {
  double noise_std = 0.0;
  std::size_t samples = 0;
  double p1 = 0.0;  // Tr[(I + dt J_Psi)^T (I + dt J_Psi)]
  double q1 = 0.0;  // dt^2 Tr[(J_G - J_Psi)^T (J_G - J_Psi)]
  double ml_base = 0.0, ml_mean = 0.0, ml_stderr = 0.0, ml_residual = 0.0;
  double mc_base = 0.0, mc_mean = 0.0, mc_stderr = 0.0, mc_residual = 0.0;
};

/// Monte-Carlo check of the second-order noise expansion for one state u with
/// data target u + dt G(u). Losses are mean squares (no alpha weight), so the
/// predicted quadratic terms are noise_std^2 P1 / n and noise_std^2 Q1 / n;
/// residuals are mean - base - that term.
RandomizationDiagnostics randomization_check(const TangentNetwork& net, const TruthTangent& truth,
                                             std::span<const double> u, double noise_std, std::size_t samples,
                                             double dt, std::uint64_t seed, std::size_t threads = 0);

/// Per-step mean squared difference of two aligned trajectories.
std::vector<double> rollout_mse(const Trajectory& pred, const Trajectory& truth);

}  // namespace mct
