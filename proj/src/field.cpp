#include "mctangent/field.hpp"

#include <cmath>
#include <string>

#include "mctangent/errors.hpp"
#include "mctangent/fft.hpp"

namespace mct {

void Grid::validate(bool spectral) const {
  if (dim != 1 && dim != 2) throw ValidationError("grid dim must be 1 or 2");
  if (n < 4) throw ValidationError("grid needs at least 4 points per axis, got " + std::to_string(n));
  if (spectral && !is_power_of_two(n)) {
    throw ValidationError("spectral grid size must be a power of two, got " + std::to_string(n));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) {
    if (std::isnan(x)) return x;
    m = std::max(m, std::abs(x));
  }
  return m;
}

double mean(std::span<const double> a) {
  double acc = 0.0;
  for (double x : a) acc += x;
  return a.empty() ? 0.0 : acc / static_cast<double>(a.size());
}

double mean_square(std::span<const double> a) {
  return a.empty() ? 0.0 : dot(a, a) / static_cast<double>(a.size());
}

bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

Field axpy(std::span<const double> a, double s, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("axpy: length mismatch");
  Field out(a.begin(), a.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
  return out;
}

Field difference(std::span<const double> a, std::span<const double> b) { return axpy(a, -1.0, b); }

}  // namespace mct
