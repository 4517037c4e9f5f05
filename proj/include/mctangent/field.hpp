#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mct {

/// Flattened solution vector on a grid. 2D fields are row-major with the row
/// index running along y.
using Field = std::vector<double>;

/// Uniform periodic grid on [0,1]^dim.
struct Grid {
  int dim = 1;
  std::size_t n = 0;  // points per axis

  double h() const noexcept { return 1.0 / static_cast<double>(n); }
  std::size_t size() const noexcept { return dim == 1 ? n : n * n; }
  /// Throws ValidationError for n < 4, dim outside {1,2}, or (when spectral)
  /// a non power-of-two n.
  void validate(bool spectral = false) const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Ordered snapshots u^0..u^{N_t} with a fixed step.
struct Trajectory {
  std::vector<Field> states;
  double dt = 0.0;
  Grid grid;

  std::size_t steps() const noexcept { return states.empty() ? 0 : states.size() - 1; }
  std::size_t state_size() const noexcept { return states.empty() ? 0 : states.front().size(); }
};

// Small vector helpers used across modules.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);
double mean(std::span<const double> a);
double mean_square(std::span<const double> a);
bool all_finite(std::span<const double> a);
/// a + s * b
Field axpy(std::span<const double> a, double s, std::span<const double> b);
Field difference(std::span<const double> a, std::span<const double> b);

}  // namespace mct
