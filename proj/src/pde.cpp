#include "mctangent/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mctangent/errors.hpp"

namespace mct {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_size(std::span<const double> u, std::size_t n, const char* what) {
  if (u.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(u.size()));
  }
}

struct Neighbors {
  std::size_t w, e, s, n;
};

Neighbors neighbors(std::size_t iy, std::size_t ix, std::size_t n) {
  return {iy * n + (ix + n - 1) % n, iy * n + (ix + 1) % n, ((iy + n - 1) % n) * n + ix,
          ((iy + 1) % n) * n + ix};
}

// Emits every nonzero (row, col, value) of the Burgers Jacobian. Columns run
// over [u; v] when full, u only otherwise; duplicates are meant to be summed.
template <typename Emit>
void burgers_jacobian_entries(std::span<const double> u, std::span<const double> v, double nu,
                              const Grid& grid, bool full, Emit&& emit) {
  const std::size_t n = grid.n;
  const std::size_t nn = n * n;
  const double h = grid.h();
  const double d = nu / (h * h);
  for (std::size_t iy = 0; iy < n; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      const std::size_t j = iy * n + ix;
      const auto nb = neighbors(iy, ix, n);
      const double a = u[j];
      const double b = v[j];

      if (a >= 0.0) {
        emit(j, j, -(2.0 * a - u[nb.w]) / h);
        emit(j, nb.w, a / h);
      } else {
        emit(j, j, -(u[nb.e] - 2.0 * a) / h);
        emit(j, nb.e, -a / h);
      }
      const double dyu = b >= 0.0 ? (a - u[nb.s]) / h : (u[nb.n] - a) / h;
      if (b >= 0.0) {
        emit(j, j, -b / h);
        emit(j, nb.s, b / h);
      } else {
        emit(j, nb.n, -b / h);
        emit(j, j, b / h);
      }
      emit(j, j, -4.0 * d);
      emit(j, nb.w, d);
      emit(j, nb.e, d);
      emit(j, nb.s, d);
      emit(j, nb.n, d);
      if (!full) continue;
      emit(j, nn + j, -dyu);

      const std::size_t r = nn + j;
      if (a >= 0.0) {
        emit(r, j, -(b - v[nb.w]) / h);
        emit(r, nn + j, -a / h);
        emit(r, nn + nb.w, a / h);
      } else {
        emit(r, j, -(v[nb.e] - b) / h);
        emit(r, nn + nb.e, -a / h);
        emit(r, nn + j, a / h);
      }
      if (b >= 0.0) {
        emit(r, nn + j, -(2.0 * b - v[nb.s]) / h);
        emit(r, nn + nb.s, b / h);
      } else {
        emit(r, nn + j, -(v[nb.n] - 2.0 * b) / h);
        emit(r, nn + nb.n, -b / h);
      }
      emit(r, nn + j, -4.0 * d);
      emit(r, nn + nb.w, d);
      emit(r, nn + nb.e, d);
      emit(r, nn + nb.s, d);
      emit(r, nn + nb.n, d);
    }
  }
}

struct NsState {
  std::vector<Complex> w_hat;
  Field u, v, wx, wy;
};

NsState ns_state(const SpectralOps& ops, std::span<const double> w) {
  const std::size_t nn = w.size();
  NsState st;
  st.w_hat = ops.forward(w);
  std::vector<Complex> u(nn), v(nn), wx(nn), wy(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    const double k2 = -ops.laplacian_symbol(i);
    const Complex psi = k2 > 0.0 ? st.w_hat[i] / k2 : Complex{};
    u[i] = ops.dy_symbol(i) * psi;
    v[i] = -ops.dx_symbol(i) * psi;
    wx[i] = ops.dx_symbol(i) * st.w_hat[i];
    wy[i] = ops.dy_symbol(i) * st.w_hat[i];
  }
  st.u = ops.inverse(u);
  st.v = ops.inverse(v);
  st.wx = ops.inverse(wx);
  st.wy = ops.inverse(wy);
  return st;
}

// Spectrum of the dealiased advection term vel.grad(w).
std::vector<Complex> ns_advection_hat(const SpectralOps& ops, const NsState& st) {
  Field nl(st.u.size());
  for (std::size_t i = 0; i < nl.size(); ++i) nl[i] = st.u[i] * st.wx[i] + st.v[i] * st.wy[i];
  auto hat = ops.forward(nl);
  for (std::size_t i = 0; i < hat.size(); ++i)
    if (!ops.kept(i)) hat[i] = Complex{};
  return hat;
}

Field ns_eval(const SpectralOps& ops, std::span<const double> w, double nu, std::span<const double> f) {
  const auto st = ns_state(ops, w);
  auto hat = ns_advection_hat(ops, st);
  for (std::size_t i = 0; i < hat.size(); ++i) hat[i] = -hat[i] + nu * ops.laplacian_symbol(i) * st.w_hat[i];
  Field out = ops.inverse(hat);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += f[i];
  return out;
}

Field ns_jvp(const SpectralOps& ops, std::span<const double> w, std::span<const double> dw, double nu) {
  const auto st = ns_state(ops, w);
  const auto dst = ns_state(ops, dw);
  Field nl(w.size());
  for (std::size_t i = 0; i < nl.size(); ++i) {
    nl[i] = dst.u[i] * st.wx[i] + st.u[i] * dst.wx[i] + dst.v[i] * st.wy[i] + st.v[i] * dst.wy[i];
  }
  auto hat = ops.forward(nl);
  for (std::size_t i = 0; i < hat.size(); ++i) {
    hat[i] = (ops.kept(i) ? -hat[i] : Complex{}) + nu * ops.laplacian_symbol(i) * dst.w_hat[i];
  }
  return ops.inverse(hat);
}

Field ns_vjp(const SpectralOps& ops, std::span<const double> w, std::span<const double> g, double nu) {
  const auto st = ns_state(ops, w);
  const std::size_t nn = w.size();
  const auto g_hat = ops.forward(g);
  const Field q = ops.dealias(g);
  Field a(nn), b(nn), c(nn), d(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    a[i] = st.wx[i] * q[i];
    b[i] = st.u[i] * q[i];
    c[i] = st.wy[i] * q[i];
    d[i] = st.v[i] * q[i];
  }
  const auto ah = ops.forward(a), bh = ops.forward(b), ch = ops.forward(c), dh = ops.forward(d);
  std::vector<Complex> hat(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    const double lap = ops.laplacian_symbol(i);
    const double inv_lap = lap != 0.0 ? 1.0 / lap : 0.0;
    const Complex t = inv_lap * ops.dy_symbol(i) * ah[i] - ops.dx_symbol(i) * bh[i] -
                      inv_lap * ops.dx_symbol(i) * ch[i] - ops.dy_symbol(i) * dh[i];
    hat[i] = -t + nu * lap * g_hat[i];
  }
  return ops.inverse(hat);
}

double ns_max_speed(const SpectralOps& ops, std::span<const double> w) {
  const auto st = ns_state(ops, w);
  double m = 0.0;
  for (std::size_t i = 0; i < st.u.size(); ++i) m = std::max(m, std::abs(st.u[i]) + std::abs(st.v[i]));
  return m;
}

}  // namespace

std::string_view problem_name(Problem p) noexcept {
  switch (p) {
    case Problem::Transport: return "transport";
    case Problem::Burgers: return "burgers";
    case Problem::NavierStokes: return "navier_stokes";
  }
  return "unknown";
}

Problem parse_problem(std::string_view name) {
  if (name == "transport") return Problem::Transport;
  if (name == "burgers") return Problem::Burgers;
  if (name == "navier_stokes") return Problem::NavierStokes;
  throw ValidationError("unknown problem '" + std::string(name) + "'");
}

SpectralOps::SpectralOps(std::size_t n) : n_(n), fft_(n), kx_(n * n), ky_(n * n), k2_(n * n), mask_(n * n) {
  const int cutoff = static_cast<int>(n / 3);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t idx = r * n + c;
      const int kx = fft_.wavenumber(c);
      const int ky = fft_.wavenumber(r);
      const bool nyq_x = c == n / 2;
      const bool nyq_y = r == n / 2;
      kx_[idx] = nyq_x ? 0.0 : kTwoPi * kx;
      ky_[idx] = nyq_y ? 0.0 : kTwoPi * ky;
      k2_[idx] = kTwoPi * kTwoPi * static_cast<double>(kx * kx + ky * ky);
      mask_[idx] = std::abs(kx) <= cutoff && std::abs(ky) <= cutoff ? 1 : 0;
    }
  }
}

template <typename Fn>
Field SpectralOps::apply(std::span<const double> f, Fn&& symbol) const {
  auto hat = forward(f);
  for (std::size_t i = 0; i < hat.size(); ++i) hat[i] *= symbol(i);
  return inverse(hat);
}

Field SpectralOps::dx(std::span<const double> f) const {
  return apply(f, [&](std::size_t i) { return dx_symbol(i); });
}

Field SpectralOps::dy(std::span<const double> f) const {
  return apply(f, [&](std::size_t i) { return dy_symbol(i); });
}

Field SpectralOps::laplacian(std::span<const double> f) const {
  return apply(f, [&](std::size_t i) { return Complex(-k2_[i]); });
}

Field SpectralOps::inverse_laplacian(std::span<const double> f) const {
  return apply(f, [&](std::size_t i) { return Complex(k2_[i] > 0.0 ? -1.0 / k2_[i] : 0.0); });
}

Field SpectralOps::dealias(std::span<const double> f) const {
  return apply(f, [&](std::size_t i) { return Complex(mask_[i] ? 1.0 : 0.0); });
}

Field advection_tangent(std::span<const double> u, double c, double h) {
  const std::size_t n = u.size();
  Field out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = -c * (u[j] - u[(j + n - 1) % n]) / h;
  return out;
}

Tensor advection_matrix(std::size_t n, double c, double h) {
  Tensor a({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    a.at(j, j) += -c / h;
    a.at(j, (j + n - 1) % n) += c / h;
  }
  return a;
}

std::pair<Field, Field> burgers_tangent(std::span<const double> u, std::span<const double> v, double nu,
                                        const Grid& grid) {
  require_size(u, grid.size(), "burgers_tangent u");
  require_size(v, grid.size(), "burgers_tangent v");
  const std::size_t n = grid.n;
  const double h = grid.h();
  const double d = nu / (h * h);
  Field du(u.size()), dv(v.size());
  for (std::size_t iy = 0; iy < n; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      const std::size_t j = iy * n + ix;
      const auto nb = neighbors(iy, ix, n);
      const double a = u[j];
      const double b = v[j];
      const double dxu = a >= 0.0 ? (a - u[nb.w]) / h : (u[nb.e] - a) / h;
      const double dyu = b >= 0.0 ? (a - u[nb.s]) / h : (u[nb.n] - a) / h;
      const double dxv = a >= 0.0 ? (b - v[nb.w]) / h : (v[nb.e] - b) / h;
      const double dyv = b >= 0.0 ? (b - v[nb.s]) / h : (v[nb.n] - b) / h;
      const double lu = u[nb.w] + u[nb.e] + u[nb.s] + u[nb.n] - 4.0 * a;
      const double lv = v[nb.w] + v[nb.e] + v[nb.s] + v[nb.n] - 4.0 * b;
      du[j] = -a * dxu - b * dyu + d * lu;
      dv[j] = -a * dxv - b * dyv + d * lv;
    }
  }
  return {std::move(du), std::move(dv)};
}

Field ns_vorticity_tangent(std::span<const double> w, double nu, std::span<const double> forcing,
                           const Grid& grid) {
  grid.validate(true);
  require_size(w, grid.size(), "ns_vorticity_tangent w");
  require_size(forcing, grid.size(), "ns_vorticity_tangent forcing");
  return ns_eval(SpectralOps(grid.n), w, nu, forcing);
}

Field ns_forcing(const Grid& grid) {
  Field f(grid.size());
  const double h = grid.h();
  for (std::size_t iy = 0; iy < grid.n; ++iy) {
    for (std::size_t ix = 0; ix < grid.n; ++ix) {
      const double s = kTwoPi * (static_cast<double>(ix) * h + static_cast<double>(iy) * h);
      f[iy * grid.n + ix] = 0.1 * (std::sin(s) + std::cos(s));
    }
  }
  return f;
}

TruthTangent::TruthTangent(Problem p, Grid grid, double param, bool full_state, Field forcing)
    : problem_(p), grid_(grid), param_(param), full_state_(full_state), forcing_(std::move(forcing)) {}

TruthTangent TruthTangent::advection(Grid grid, double c) {
  grid.validate();
  if (grid.dim != 1) throw ValidationError("advection tangent needs a 1D grid");
  if (!(c > 0.0)) throw ValidationError("advection speed must be positive");
  return TruthTangent(Problem::Transport, grid, c, false, {});
}

TruthTangent TruthTangent::burgers(Grid grid, double nu, bool full_state) {
  grid.validate();
  if (grid.dim != 2) throw ValidationError("Burgers tangent needs a 2D grid");
  if (!(nu > 0.0)) throw ValidationError("Burgers viscosity must be positive");
  return TruthTangent(Problem::Burgers, grid, nu, full_state, {});
}

TruthTangent TruthTangent::navier_stokes(Grid grid, double nu, Field forcing) {
  grid.validate(true);
  if (grid.dim != 2) throw ValidationError("Navier-Stokes tangent needs a 2D grid");
  if (!(nu > 0.0)) throw ValidationError("Navier-Stokes viscosity must be positive");
  if (forcing.empty()) forcing.assign(grid.size(), 0.0);
  require_size(forcing, grid.size(), "navier_stokes forcing");
  TruthTangent t(Problem::NavierStokes, grid, nu, false, std::move(forcing));
  t.spectral_ = std::make_shared<const SpectralOps>(grid.n);
  return t;
}

std::size_t TruthTangent::state_size() const noexcept {
  return full_state_ ? 2 * grid_.size() : grid_.size();
}

void TruthTangent::check(std::span<const double> u) const { require_size(u, state_size(), "truth tangent state"); }

Field TruthTangent::eval(std::span<const double> u) const {
  check(u);
  switch (problem_) {
    case Problem::Transport: return advection_tangent(u, param_, grid_.h());
    case Problem::Burgers: {
      const std::size_t nn = grid_.size();
      if (full_state_) {
        auto [du, dv] = burgers_tangent(u.first(nn), u.subspan(nn), param_, grid_);
        du.insert(du.end(), dv.begin(), dv.end());
        return du;
      }
      const Field ones(nn, 1.0);
      return burgers_tangent(u, ones, param_, grid_).first;
    }
    case Problem::NavierStokes: return ns_eval(*spectral_, u, param_, forcing_);
  }
  return {};
}

Field TruthTangent::jvp(std::span<const double> u, std::span<const double> d) const {
  check(u);
  check(d);
  switch (problem_) {
    case Problem::Transport: return advection_tangent(d, param_, grid_.h());
    case Problem::Burgers: {
      Field out(u.size(), 0.0);
      const std::size_t nn = grid_.size();
      const Field ones(full_state_ ? 0 : nn, 1.0);
      const auto v = full_state_ ? u.subspan(nn) : std::span<const double>(ones);
      burgers_jacobian_entries(u.first(nn), v, param_, grid_, full_state_,
                               [&](std::size_t r, std::size_t c, double val) { out[r] += val * d[c]; });
      return out;
    }
    case Problem::NavierStokes: return ns_jvp(*spectral_, u, d, param_);
  }
  return {};
}

Field TruthTangent::vjp(std::span<const double> u, std::span<const double> g) const {
  check(u);
  check(g);
  switch (problem_) {
    case Problem::Transport: {
      const std::size_t n = g.size();
      const double s = param_ / grid_.h();
      Field out(n);
      for (std::size_t j = 0; j < n; ++j) out[j] = -s * (g[j] - g[(j + 1) % n]);
      return out;
    }
    case Problem::Burgers: {
      Field out(u.size(), 0.0);
      const std::size_t nn = grid_.size();
      const Field ones(full_state_ ? 0 : nn, 1.0);
      const auto v = full_state_ ? u.subspan(nn) : std::span<const double>(ones);
      burgers_jacobian_entries(u.first(nn), v, param_, grid_, full_state_,
                               [&](std::size_t r, std::size_t c, double val) { out[c] += val * g[r]; });
      return out;
    }
    case Problem::NavierStokes: return ns_vjp(*spectral_, u, g, param_);
  }
  return {};
}

Tensor TruthTangent::jacobian(std::span<const double> u) const {
  check(u);
  const std::size_t m = state_size();
  switch (problem_) {
    case Problem::Transport: return advection_matrix(m, param_, grid_.h());
    case Problem::Burgers: {
      Tensor j({m, m});
      const std::size_t nn = grid_.size();
      const Field ones(full_state_ ? 0 : nn, 1.0);
      const auto v = full_state_ ? u.subspan(nn) : std::span<const double>(ones);
      burgers_jacobian_entries(u.first(nn), v, param_, grid_, full_state_,
                               [&](std::size_t r, std::size_t c, double val) { j.at(r, c) += val; });
      return j;
    }
    case Problem::NavierStokes: {
      Tensor j({m, m});
      Field e(m, 0.0);
      for (std::size_t c = 0; c < m; ++c) {
        e[c] = 1.0;
        const Field col = ns_jvp(*spectral_, u, e, param_);
        e[c] = 0.0;
        for (std::size_t r = 0; r < m; ++r) j.at(r, c) = col[r];
      }
      return j;
    }
  }
  return {};
}

double TruthTangent::max_stable_dt(std::span<const double> u) const {
  check(u);
  const double h = grid_.h();
  const double inf = std::numeric_limits<double>::infinity();
  switch (problem_) {
    case Problem::Transport: return h / param_;
    case Problem::Burgers: {
      const std::size_t nn = grid_.size();
      const double su = norm_inf(u.first(nn));
      const double sv = full_state_ ? norm_inf(u.subspan(nn)) : 1.0;
      return 1.0 / ((su + sv) / h + 4.0 * param_ / (h * h));
    }
    case Problem::NavierStokes: {
      const double s = ns_max_speed(*spectral_, u);
      return s > 0.0 ? h / s : inf;
    }
  }
  return inf;
}

Trajectory solve_reference(const TruthTangent& truth, std::span<const double> u0, std::size_t steps, double T) {
  require_size(u0, truth.state_size(), "solve_reference initial state");
  if (!all_finite(u0)) throw ValidationError("solve_reference: initial state is not finite");
  Trajectory traj;
  traj.grid = truth.grid();
  traj.states.emplace_back(u0.begin(), u0.end());
  if (steps == 0) {
    traj.dt = T;
    return traj;
  }
  if (!(T > 0.0)) throw ValidationError("solve_reference: horizon T must be positive");
  const double dt = T / static_cast<double>(steps);
  traj.dt = dt;
  const double limit = truth.max_stable_dt(u0);
  if (dt > limit * (1.0 + 1e-12)) {
    throw StabilityError("time step " + std::to_string(dt) + " exceeds the stability limit " + std::to_string(limit) +
                         " for the " + std::string(problem_name(truth.problem())) + " reference solver");
  }
  traj.states.reserve(steps + 1);

  if (truth.problem() != Problem::NavierStokes) {
    for (std::size_t k = 1; k <= steps; ++k) {
      const Field& u = traj.states.back();
      Field next = axpy(u, dt, truth.eval(u));
      if (!all_finite(next)) throw DivergenceError("reference solve produced non-finite values", k);
      traj.states.push_back(std::move(next));
    }
    return traj;
  }

  const SpectralOps ops(truth.grid().n);
  const double nu = truth.viscosity();
  const auto f_hat = ops.forward(truth.forcing());
  for (std::size_t k = 1; k <= steps; ++k) {
    const auto st = ns_state(ops, traj.states.back());
    const auto adv = ns_advection_hat(ops, st);
    std::vector<Complex> hat(adv.size());
    for (std::size_t i = 0; i < hat.size(); ++i) {
      const double half = 0.5 * nu * dt * ops.laplacian_symbol(i);
      hat[i] = ((1.0 + half) * st.w_hat[i] + dt * (f_hat[i] - adv[i])) / (1.0 - half);
    }
    Field next = ops.inverse(hat);
    if (!all_finite(next)) throw DivergenceError("reference solve produced non-finite values", k);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

Trajectory downsample(const Trajectory& fine, std::size_t space_stride, std::size_t time_stride) {
  if (space_stride == 0 || time_stride == 0) throw ValidationError("downsample strides must be positive");
  const Grid& g = fine.grid;
  if (g.n % space_stride != 0) {
    throw ValidationError("space stride " + std::to_string(space_stride) + " does not divide grid size " +
                          std::to_string(g.n));
  }
  if (fine.steps() % time_stride != 0) {
    throw ValidationError("time stride " + std::to_string(time_stride) + " does not divide N_t = " +
                          std::to_string(fine.steps()));
  }
  const std::size_t cells = g.size();
  if (cells == 0 || fine.state_size() % cells != 0) throw DimensionError("downsample: state size does not match grid");
  const std::size_t comps = fine.state_size() / cells;

  Trajectory out;
  out.grid = Grid{g.dim, g.n / space_stride};
  out.dt = fine.dt * static_cast<double>(time_stride);
  const std::size_t cn = out.grid.n;
  for (std::size_t k = 0; k < fine.states.size(); k += time_stride) {
    const Field& u = fine.states[k];
    Field c;
    c.reserve(comps * out.grid.size());
    for (std::size_t comp = 0; comp < comps; ++comp) {
      const double* base = u.data() + comp * cells;
      if (g.dim == 1) {
        for (std::size_t i = 0; i < cn; ++i) c.push_back(base[i * space_stride]);
      } else {
        for (std::size_t iy = 0; iy < cn; ++iy)
          for (std::size_t ix = 0; ix < cn; ++ix) c.push_back(base[iy * space_stride * g.n + ix * space_stride]);
      }
    }
    out.states.push_back(std::move(c));
  }
  return out;
}

Field transport_initial(const Grid& grid, std::span<const double> a, std::span<const double> b) {
  if (a.size() != 5 || b.size() != 5) throw DimensionError("transport_initial needs 5 sine and 5 cosine coefficients");
  if (grid.dim != 1) throw ValidationError("transport_initial needs a 1D grid");
  Field u(grid.n, 0.0);
  for (std::size_t j = 0; j < grid.n; ++j) {
    const double x = static_cast<double>(j) * grid.h();
    for (std::size_t i = 0; i < 5; ++i) {
      const double arg = kTwoPi * static_cast<double>(i + 1) * x;
      u[j] += a[i] * std::sin(arg) + b[i] * std::cos(arg);
    }
  }
  return u;
}

Field sample_initial_transport(const Grid& grid, Rng& rng) {
  std::vector<double> a(5), b(5);
  rng.fill_normal(a);
  rng.fill_normal(b);
  return transport_initial(grid, a, b);
}

KLSampler::KLSampler(Grid grid, Options options) : grid_(grid), options_(options) {
  grid_.validate();
  if (grid_.dim != 2) throw ValidationError("KL sampler needs a 2D grid");
  const int kmax = static_cast<int>(grid_.n / 2) - 1;
  struct Candidate {
    int kx, ky, k2;
  };
  std::vector<Candidate> cand;
  for (int kx = 0; kx <= kmax; ++kx)
    for (int ky = -kmax; ky <= kmax; ++ky)
      if (kx > 0 || ky > 0) cand.push_back({kx, ky, kx * kx + ky * ky});
  // Eigenvalues decrease with |k|^2, so sorting on the integer key is exact.
  std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
    if (a.k2 != b.k2) return a.k2 < b.k2;
    if (a.kx != b.kx) return a.kx < b.kx;
    return a.ky < b.ky;
  });
  if (2 * cand.size() < options_.modes) {
    throw ValidationError("grid of size " + std::to_string(grid_.n) + " resolves fewer than " +
                          std::to_string(options_.modes) + " KL modes");
  }
  for (const auto& c : cand) {
    for (bool is_sin : {true, false}) {
      if (modes_.size() == options_.modes) break;
      modes_.push_back({c.kx, c.ky, is_sin, eigenvalue(c.kx, c.ky)});
    }
  }
  const std::size_t n = grid_.n;
  const double h = grid_.h();
  for (const auto& m : modes_) {
    Field phi(n * n);
    for (std::size_t iy = 0; iy < n; ++iy) {
      for (std::size_t ix = 0; ix < n; ++ix) {
        const double arg = kTwoPi * (m.kx * static_cast<double>(ix) * h + m.ky * static_cast<double>(iy) * h);
        phi[iy * n + ix] = std::numbers::sqrt2 * (m.is_sin ? std::sin(arg) : std::cos(arg));
      }
    }
    basis_.push_back(std::move(phi));
  }
}

double KLSampler::eigenvalue(int kx, int ky) const noexcept {
  const double k2 = static_cast<double>(kx * kx + ky * ky);
  return options_.scale * std::pow(kTwoPi * kTwoPi * k2 + options_.shift, -options_.exponent);
}

Field KLSampler::sample(std::span<const double> z) const {
  if (z.size() != modes_.size()) {
    throw DimensionError("KL sample needs " + std::to_string(modes_.size()) + " coefficients, got " +
                         std::to_string(z.size()));
  }
  Field s(grid_.size(), 0.0);
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    const double w = std::sqrt(modes_[i].lambda) * z[i];
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += w * basis_[i][j];
  }
  if (options_.exponentiate)
    for (double& x : s) x = std::exp(x);
  return s;
}

Field KLSampler::sample(Rng& rng) const {
  std::vector<double> z(modes_.size());
  rng.fill_normal(z);
  return sample(z);
}

}  // namespace mct
