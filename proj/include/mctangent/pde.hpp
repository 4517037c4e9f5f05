#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mctangent/fft.hpp"
#include "mctangent/field.hpp"
#include "mctangent/rng.hpp"
#include "mctangent/tensor.hpp"

namespace mct {

enum class Problem { Transport, Burgers, NavierStokes };

std::string_view problem_name(Problem p) noexcept;
/// Accepts "transport", "burgers", "navier_stokes" (ValidationError otherwise).
Problem parse_problem(std::string_view name);

/// Fourier-space helpers on an n x n periodic grid (wavenumbers scaled by 2 pi).
/// Odd-derivative symbols vanish at the Nyquist index so real fields stay real
/// and the discrete derivatives stay exactly skew-symmetric.
class SpectralOps {
 public:
  explicit SpectralOps(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  std::vector<Complex> forward(std::span<const double> f) const { return fft_.forward(f); }
  Field inverse(std::span<const Complex> s) const { return fft_.inverse(s); }

  Field dx(std::span<const double> f) const;
  Field dy(std::span<const double> f) const;
  Field laplacian(std::span<const double> f) const;
  /// Zero-mean solution of Lap(p) = f; the mean of f is ignored.
  Field inverse_laplacian(std::span<const double> f) const;
  /// 2/3-rule truncation: keeps |kx|, |ky| <= n/3.
  Field dealias(std::span<const double> f) const;

  // Per-index symbols, row-major like the fields.
  Complex dx_symbol(std::size_t idx) const noexcept { return {0.0, kx_[idx]}; }
  Complex dy_symbol(std::size_t idx) const noexcept { return {0.0, ky_[idx]}; }
  double laplacian_symbol(std::size_t idx) const noexcept { return -k2_[idx]; }
  bool kept(std::size_t idx) const noexcept { return mask_[idx] != 0; }

 private:
  template <typename Fn>
  Field apply(std::span<const double> f, Fn&& symbol) const;

  std::size_t n_;
  Fft2 fft_;
  std::vector<double> kx_, ky_, k2_;
  std::vector<unsigned char> mask_;
};

/// G(u)_j = -c (u_j - u_{j-1}) / h, periodic.
Field advection_tangent(std::span<const double> u, double c, double h);
/// Dense upwind matrix A with advection_tangent(u) == A u.
Tensor advection_matrix(std::size_t n, double c, double h);

/// Coupled viscous Burgers right-hand side on a 2D periodic grid: first-order
/// upwind convection chosen per node by the sign of the advecting velocity,
/// central 5-point Laplacian.
std::pair<Field, Field> burgers_tangent(std::span<const double> u, std::span<const double> v, double nu,
                                        const Grid& grid);

/// Vorticity-form Navier-Stokes right-hand side -vel.grad(w) + nu Lap(w) + f,
/// pseudospectral with a dealiased product.
Field ns_vorticity_tangent(std::span<const double> w, double nu, std::span<const double> forcing,
                           const Grid& grid);

/// f = 0.1 (sin(2 pi (x+y)) + cos(2 pi (x+y))).
Field ns_forcing(const Grid& grid);

class TruthTangent {
 public:
  static TruthTangent advection(Grid grid, double c);
  /// full_state: state is [u; v] (length 2N^2). Otherwise the state is u and
  /// the companion v is held at 1.
  static TruthTangent burgers(Grid grid, double nu, bool full_state = false);
  static TruthTangent navier_stokes(Grid grid, double nu, Field forcing);

  Problem problem() const noexcept { return problem_; }
  const Grid& grid() const noexcept { return grid_; }
  std::size_t state_size() const noexcept;
  double speed() const noexcept { return param_; }
  double viscosity() const noexcept { return param_; }
  bool full_state() const noexcept { return full_state_; }
  const Field& forcing() const noexcept { return forcing_; }

  Field eval(std::span<const double> u) const;
  /// J_G(u) d
  Field jvp(std::span<const double> u, std::span<const double> d) const;
  /// J_G(u)^T g
  Field vjp(std::span<const double> u, std::span<const double> g) const;
  /// Dense J_G(u), assembled exactly.
  Tensor jacobian(std::span<const double> u) const;

  /// Largest forward-Euler step satisfying the explicit stability check at u.
  double max_stable_dt(std::span<const double> u) const;

 private:
  TruthTangent(Problem p, Grid grid, double param, bool full_state, Field forcing);
  void check(std::span<const double> u) const;

  Problem problem_;
  Grid grid_;
  double param_;
  bool full_state_ = false;
  Field forcing_;
  std::shared_ptr<const SpectralOps> spectral_;
};

/// High-resolution reference trajectory with steps = N_t and horizon T.
/// Advection and Burgers use forward Euler with the truth tangent; NS uses
/// Crank-Nicolson for viscosity with explicit advection and forcing.
Trajectory solve_reference(const TruthTangent& truth, std::span<const double> u0, std::size_t steps, double T);

/// Pointwise subsampling from index 0 in space and time; multi-component
/// states are subsampled per component.
Trajectory downsample(const Trajectory& fine, std::size_t space_stride, std::size_t time_stride);

/// u0(x) = sum_{i=1..5} a_i sin(2 pi i x) + b_i cos(2 pi i x).
Field transport_initial(const Grid& grid, std::span<const double> a, std::span<const double> b);
Field sample_initial_transport(const Grid& grid, Rng& rng);

class KLSampler {
 public:
  struct Options {
    std::size_t modes = 15;
    double scale = 18.520259177452133;  // 7^{3/2}
    double shift = 49.0;
    double exponent = 2.5;
    bool exponentiate = true;
  };
  struct Mode {
    int kx = 0;
    int ky = 0;
    bool is_sin = true;
    double lambda = 0.0;
  };

  KLSampler(Grid grid, Options options);

  const Grid& grid() const noexcept { return grid_; }
  const Options& options() const noexcept { return options_; }
  const std::vector<Mode>& modes() const noexcept { return modes_; }
  const std::vector<Field>& eigenfunctions() const noexcept { return basis_; }

  double eigenvalue(int kx, int ky) const noexcept;
  Field sample(std::span<const double> z) const;
  Field sample(Rng& rng) const;

 private:
  Grid grid_;
  Options options_;
  std::vector<Mode> modes_;
  std::vector<Field> basis_;
};

}  // namespace mct
