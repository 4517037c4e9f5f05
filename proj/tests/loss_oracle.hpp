#pragma once

// Plain-arithmetic evaluation of the training loss of one window.

#include <cstddef>
#include <vector>

#include "mctangent/field.hpp"
#include "mctangent/network.hpp"
#include "mctangent/pde.hpp"
#include "mctangent/training.hpp"

namespace oracle {

using namespace mct;

inline double mean_sq_diff(const Field& a, const Field& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Loss of one window evaluated with plain arithmetic.
inline double window_loss(const TangentNetwork& net, const TruthTangent& truth, const TrainConfig& cfg,
                          const Trajectory& traj, std::size_t start, const Field& eps) {
  auto step = [&](const Field& x) {
    const Field y = net.forward(x);
    return cfg.mode == NetMode::Tangent ? axpy(x, cfg.dt, y) : y;
  };
  std::vector<Field> tilde{traj.states[start]};
  if (!eps.empty())
    for (std::size_t i = 0; i < eps.size(); ++i) tilde[0][i] += eps[i];
  double ml = 0.0;
  for (std::size_t i = 1; i <= cfg.S + 1; ++i) {
    tilde.push_back(step(tilde.back()));
    ml += mean_sq_diff(traj.states[start + i], tilde.back());
  }
  ml /= static_cast<double>(cfg.S + 1);
  double mc = 0.0;
  if (cfg.alpha > 0.0) {
    for (std::size_t i = 0; i <= cfg.S; ++i) {
      Field bar = tilde[i], hat = tilde[i];
      for (std::size_t r = 1; r <= cfg.R; ++r) {
        bar = axpy(bar, cfg.dt, truth.eval(bar));
        hat = step(hat);
        mc += mean_sq_diff(bar, hat);
      }
    }
    mc *= cfg.alpha / static_cast<double>(cfg.R * (cfg.S + 1));
  }
  return ml + mc;
}

}  // namespace oracle
