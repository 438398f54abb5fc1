#include "fft.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <utility>

namespace teff::detail {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft2d::RealFft2d(int rows, int cols) : rows_(rows), cols_(cols) {
  std::lock_guard lock(planner_mutex());
  real_ = fftw_alloc_real(static_cast<std::size_t>(rows) * cols);
  spectrum_ = fftw_alloc_complex(static_cast<std::size_t>(rows) * half_cols());
  if (!real_ || !spectrum_) {
    fftw_free(real_);
    fftw_free(spectrum_);
    throw std::bad_alloc();
  }
  forward_ = fftw_plan_dft_r2c_2d(rows, cols, real_, spectrum_, FFTW_ESTIMATE);
  inverse_ = fftw_plan_dft_c2r_2d(rows, cols, spectrum_, real_, FFTW_ESTIMATE);
}

RealFft2d::~RealFft2d() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(forward_);
  fftw_destroy_plan(inverse_);
  fftw_free(real_);
  fftw_free(spectrum_);
}

RealFft2d& thread_fft(int rows, int cols) {
  thread_local std::map<std::pair<int, int>, std::unique_ptr<RealFft2d>> cache;
  auto& slot = cache[{rows, cols}];
  if (!slot) slot = std::make_unique<RealFft2d>(rows, cols);
  return *slot;
}

}  // namespace teff::detail
