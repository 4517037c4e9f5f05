#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace mct {

using Complex = std::complex<double>;

/// Iterative radix-2 FFT for a fixed power-of-two length.
class Fft {
 public:
  explicit Fft(std::size_t n);

  std::size_t size() const noexcept { return n_; }

  /// In place, X_k = sum_j x_j exp(-2 pi i jk / n).
  void forward(std::span<Complex> data) const;
  /// In place, includes the 1/n factor.
  void inverse(std::span<Complex> data) const;

 private:
  void transform(std::span<Complex> data, bool invert) const;

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<Complex> twiddle_;
};

/// 2D transforms of an n x n periodic field stored row-major (row = y index).
/// Real rows are transformed two at a time packed into one complex FFT.
class Fft2 {
 public:
  explicit Fft2(std::size_t n);

  std::size_t size() const noexcept { return n_; }

  std::vector<Complex> forward(std::span<const double> field) const;
  /// Inverse of a Hermitian spectrum; the imaginary residue is discarded.
  std::vector<double> inverse(std::span<const Complex> spectrum) const;

  /// Signed wavenumber for index i (0..n/2-1 positive, n/2.. negative).
  int wavenumber(std::size_t i) const noexcept;

 private:
  std::size_t n_;
  Fft fft_;
};

bool is_power_of_two(std::size_t n) noexcept;

}  // namespace mct
