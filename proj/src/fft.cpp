#include "mctangent/fft.hpp"

#include <cmath>
#include <numbers>

#include "mctangent/errors.hpp"

namespace mct {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

Fft::Fft(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
  if (!is_power_of_two(n)) throw ValidationError("FFT length must be a power of two");
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = Complex(std::cos(angle), std::sin(angle));
  }
}

void Fft::transform(std::span<Complex> a, bool invert) const {
  if (a.size() != n_) throw DimensionError("FFT input length mismatch");
  for (std::size_t i = 0; i < n_; ++i)
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        Complex w = twiddle_[j * step];
        if (invert) w = std::conj(w);
        const Complex u = a[start + j];
        const Complex v = a[start + j + half] * w;
        a[start + j] = u + v;
        a[start + j + half] = u - v;
      }
    }
  }
}

void Fft::forward(std::span<Complex> data) const { transform(data, false); }

void Fft::inverse(std::span<Complex> data) const {
  transform(data, true);
  const double s = 1.0 / static_cast<double>(n_);
  for (auto& x : data) x *= s;
}

Fft2::Fft2(std::size_t n) : n_(n), fft_(n) {}

int Fft2::wavenumber(std::size_t i) const noexcept {
  return i < n_ / 2 ? static_cast<int>(i) : static_cast<int>(i) - static_cast<int>(n_);
}

std::vector<Complex> Fft2::forward(std::span<const double> field) const {
  const std::size_t n = n_;
  if (field.size() != n * n) throw DimensionError("Fft2 field size mismatch");
  std::vector<Complex> out(n * n);
  std::vector<Complex> buf(n);

  // Rows in pairs: FFT(a + i b) = A + i B with A, B Hermitian.
  for (std::size_t r = 0; r < n; r += 2) {
    const bool pair = r + 1 < n;
    for (std::size_t c = 0; c < n; ++c)
      buf[c] = Complex(field[r * n + c], pair ? field[(r + 1) * n + c] : 0.0);
    fft_.forward(buf);
    for (std::size_t k = 0; k < n; ++k) {
      const Complex z = buf[k];
      const Complex zc = std::conj(buf[(n - k) % n]);
      out[r * n + k] = 0.5 * (z + zc);
      if (pair) out[(r + 1) * n + k] = Complex(0.0, -0.5) * (z - zc);
    }
  }
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t r = 0; r < n; ++r) buf[r] = out[r * n + c];
    fft_.forward(buf);
    for (std::size_t r = 0; r < n; ++r) out[r * n + c] = buf[r];
  }
  return out;
}

std::vector<double> Fft2::inverse(std::span<const Complex> spectrum) const {
  const std::size_t n = n_;
  if (spectrum.size() != n * n) throw DimensionError("Fft2 spectrum size mismatch");
  std::vector<Complex> work(spectrum.begin(), spectrum.end());
  std::vector<Complex> buf(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t r = 0; r < n; ++r) buf[r] = work[r * n + c];
    fft_.inverse(buf);
    for (std::size_t r = 0; r < n; ++r) work[r * n + c] = buf[r];
  }
  // Each row now has a real inverse, so two rows share one transform.
  std::vector<double> out(n * n);
  for (std::size_t r = 0; r < n; r += 2) {
    const bool pair = r + 1 < n;
    for (std::size_t k = 0; k < n; ++k)
      buf[k] = work[r * n + k] + (pair ? Complex(0.0, 1.0) * work[(r + 1) * n + k] : Complex{});
    fft_.inverse(buf);
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = buf[c].real();
      if (pair) out[(r + 1) * n + c] = buf[c].imag();
    }
  }
  return out;
}

}  // namespace mct
