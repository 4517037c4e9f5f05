#include "mctangent/analysis.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "mctangent/errors.hpp"
#include "mctangent/integrators.hpp"
#include "mctangent/parallel.hpp"
#include "mctangent/rng.hpp"

namespace mct {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& a) {
  const auto r = static_cast<Eigen::Index>(a.rows());
  const auto c = static_cast<Eigen::Index>(a.cols());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = a[static_cast<std::size_t>(i * c + j)];
  return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return t;
}

}  // namespace

LinearOptimum linear_optimum(const Tensor& G, const Tensor& U0, double cutoff) {
  if (G.rank() != 2 || G.rows() != G.cols()) throw DimensionError("linear_optimum: G must be square");
  if (U0.rank() != 2 || U0.rows() != G.rows()) throw DimensionError("linear_optimum: U0 must be [n x N]");
  if (U0.cols() == 0) throw ValidationError("linear_optimum needs at least one snapshot");
  const Eigen::MatrixXd g = to_eigen(G);
  const Eigen::MatrixXd u = to_eigen(U0);
  const Eigen::VectorXd mean = u.rowwise().mean();
  const Eigen::MatrixXd p = u.colwise() - mean;

  const auto n = g.rows();
  Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(n, n);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s.maxCoeff() : 0.0;
  if (smax > 0.0) {
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      if (s[k] > cutoff * smax) proj += svd.matrixU().col(k) * svd.matrixU().col(k).transpose();
    }
  }
  const Eigen::MatrixXd w = g * proj;
  const Eigen::VectorXd b = g * ((Eigen::MatrixXd::Identity(n, n) - proj) * mean);
  LinearOptimum out{from_eigen(w), Tensor({static_cast<std::size_t>(n)})};
  for (Eigen::Index i = 0; i < n; ++i) out.b[static_cast<std::size_t>(i)] = b[i];
  return out;
}

double spectral_norm(const Tensor& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(to_eigen(a));
  return svd.singularValues()[0];
}

std::vector<double> prediction_error_series(const Trajectory& truth_traj, const TangentNetwork& net, double dt) {
  if (truth_traj.states.empty()) throw ValidationError("prediction_error_series: empty trajectory");
  const std::size_t steps = truth_traj.steps();
  const auto res = rollout(SchemeSpec{}, [&](std::span<const double> u) { return net.forward(u); }, {},
                           truth_traj.states[0], dt, steps);
  std::vector<double> e(steps + 1, std::numeric_limits<double>::infinity());
  const auto& pred = res.trajectory.states;
  for (std::size_t k = 0; k < pred.size(); ++k) e[k] = norm2(difference(truth_traj.states[k], pred[k]));
  return e;
}

std::string_view remainder_policy_name(RemainderPolicy p) noexcept {
  return p == RemainderPolicy::Zero ? "zero" : "finite_difference";
}

RemainderPolicy parse_remainder_policy(std::string_view name) {
  if (name == "zero") return RemainderPolicy::Zero;
  if (name == "finite_difference") return RemainderPolicy::FiniteDifference;
  throw ValidationError("unknown remainder policy '" + std::string(name) + "'");
}

ErrorReport gronwall_bound(const TangentNetwork& net, const TruthTangent& truth, const Trajectory& truth_traj,
                           double dt, std::size_t steps, RemainderPolicy policy) {
  if (net.mode() != NetMode::Tangent) throw ValidationError("the error bound needs a tangent-mode network");
  if (truth_traj.states.size() < steps + 1) throw ValidationError("truth trajectory is shorter than the bound horizon");
  ErrorReport rep;
  rep.policy = policy;
  rep.e.assign(steps + 1, 0.0);
  rep.f.assign(steps + 1, 0.0);
  rep.g.assign(steps + 1, 0.0);
  rep.B.assign(steps + 1, 0.0);
  rep.c.assign(steps, 0.0);

  Field ut = truth_traj.states[0];
  const std::size_t n = ut.size();
  for (std::size_t i = 0; i < steps; ++i) {
    const Field e_vec = difference(truth_traj.states[i], ut);
    rep.e[i] = norm2(e_vec);
    const Field psi = net.forward(ut);
    const Field gval = truth.eval(ut);
    rep.f[i + 1] = dt * norm2(difference(gval, psi));

    const Tensor jg = truth.jacobian(ut);
    const Tensor jp = net.jacobian(ut);
    Tensor diff({n, n});
    Tensor amp({n, n});
    for (std::size_t k = 0; k < n * n; ++k) {
      diff[k] = jg[k] - jp[k];
      amp[k] = dt * jp[k];
    }
    for (std::size_t k = 0; k < n; ++k) amp.at(k, k) += 1.0;

    double c = 0.0;
    if (policy == RemainderPolicy::FiniteDifference && rep.e[i] > 0.0) {
      const Field shifted = truth.eval(axpy(ut, 1.0, e_vec));
      const Field lin = truth.jvp(ut, e_vec);
      Field rem(n);
      for (std::size_t k = 0; k < n; ++k) rem[k] = shifted[k] - gval[k] - lin[k];
      c = dt * norm2(rem) / rep.e[i];
    }
    rep.c[i] = c;
    rep.g[i + 1] = dt * spectral_norm(diff) + spectral_norm(amp) + c;
    rep.B[i + 1] = rep.g[i + 1] * rep.B[i] + rep.f[i + 1];

    ut = axpy(ut, dt, psi);
  }
  rep.e[steps] = norm2(difference(truth_traj.states[steps], ut));
  return rep;
}

RandomizationDiagnostics randomization_check(const TangentNetwork& net, const TruthTangent& truth,
                                             std::span<const double> u, double noise_std, std::size_t samples,
                                             double dt, std::uint64_t seed, std::size_t threads) {
  if (net.mode() != NetMode::Tangent) throw ValidationError("randomization diagnostics need a tangent-mode network");
  if (noise_std < 0.0) throw ValidationError("noise level must be non-negative");
  if (samples == 0) throw ValidationError("randomization check needs at least one sample");
  const std::size_t n = u.size();
  const Field target = axpy(u, dt, truth.eval(u));

  auto losses = [&](std::span<const double> x) {
    const Field psi = net.forward(x);
    const Field gx = truth.eval(x);
    double ml = 0.0, mc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double pred = x[k] + dt * psi[k];
      ml += (target[k] - pred) * (target[k] - pred);
      const double d = dt * (gx[k] - psi[k]);
      mc += d * d;
    }
    return std::pair{ml / static_cast<double>(n), mc / static_cast<double>(n)};
  };

  RandomizationDiagnostics d;
  d.noise_std = noise_std;
  d.samples = samples;
  const Tensor jp = net.jacobian(u);
  const Tensor jg = truth.jacobian(u);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double a = (r == c ? 1.0 : 0.0) + dt * jp.at(r, c);
      const double q = dt * (jg.at(r, c) - jp.at(r, c));
      d.p1 += a * a;
      d.q1 += q * q;
    }
  }
  std::tie(d.ml_base, d.mc_base) = losses(u);

  std::vector<double> ml(samples), mc(samples);
  const Rng root = Rng::stream(seed, "diagnose");
  parallel_for(samples, threads, [&](std::size_t s) {
    Rng rng = root.split(s);
    Field x(u.begin(), u.end());
    Field eps(n);
    rng.fill_normal(eps, noise_std);
    for (std::size_t k = 0; k < n; ++k) x[k] += eps[k];
    std::tie(ml[s], mc[s]) = losses(x);
  });

  auto stats = [&](const std::vector<double>& v, double base, double& mean, double& stderr_) {
    double acc = 0.0;
    for (double x : v) acc += x - base;
    const double m = acc / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - base - m) * (x - base - m);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    mean = base + m;
    stderr_ = std::sqrt(var / static_cast<double>(v.size()));
    return m;
  };
  const double scale = noise_std * noise_std / static_cast<double>(n);
  d.ml_residual = stats(ml, d.ml_base, d.ml_mean, d.ml_stderr) - scale * d.p1;
  d.mc_residual = stats(mc, d.mc_base, d.mc_mean, d.mc_stderr) - scale * d.q1;
  return d;
}

std::vector<double> rollout_mse(const Trajectory& pred, const Trajectory& truth) {
  if (pred.states.size() != truth.states.size()) {
    throw DimensionError("rollout_mse: trajectories have " + std::to_string(pred.states.size()) + " and " +
                         std::to_string(truth.states.size()) + " states");
  }
  std::vector<double> out(pred.states.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (pred.states[k].size() != truth.states[k].size()) throw DimensionError("rollout_mse: state length mismatch");
    out[k] = mean_square(difference(pred.states[k], truth.states[k]));
  }
  return out;
}

}  // namespace mct
