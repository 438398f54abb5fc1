#pragma once

// Thin RAII wrapper over FFTW's 2D real-data transforms.
//
// FFTW planning is not thread-safe, so plan creation is serialized behind a
// global mutex and plans are cached per thread and shape. Execution on a
// plan's own buffers is then lock-free. Plans use FFTW_ESTIMATE so the
// chosen algorithm, and therefore every rounding, is the same on each run.

#include <fftw3.h>

#include <complex>
#include <span>

namespace teff::detail {

class RealFft2d {
 public:
  RealFft2d(int rows, int cols);
  ~RealFft2d();
  RealFft2d(const RealFft2d&) = delete;
  RealFft2d& operator=(const RealFft2d&) = delete;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  /// Width of the half spectrum, cols / 2 + 1.
  int half_cols() const { return cols_ / 2 + 1; }

  /// Row-major rows x cols real samples.
  std::span<double> real() { return {real_, static_cast<std::size_t>(rows_) * cols_}; }
  /// Row-major rows x half_cols() non-negative-frequency half spectrum.
  std::span<std::complex<double>> spectrum() {
    return {reinterpret_cast<std::complex<double>*>(spectrum_),
            static_cast<std::size_t>(rows_) * half_cols()};
  }

  /// real() -> spectrum().
  void forward() { fftw_execute(forward_); }
  /// spectrum() -> real(), unnormalized (scaled by rows * cols). Overwrites
  /// the spectrum.
  void inverse() { fftw_execute(inverse_); }

 private:
  int rows_;
  int cols_;
  double* real_ = nullptr;
  fftw_complex* spectrum_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

/// Per-thread cached transform for the given shape.
RealFft2d& thread_fft(int rows, int cols);

}  // namespace teff::detail
