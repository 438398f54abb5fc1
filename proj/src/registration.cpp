#include "teff/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fft.hpp"
#include "teff/errors.hpp"
#include "teff/geometry.hpp"
#include "teff/parallel.hpp"

namespace teff {

namespace {

using Complex = std::complex<double>;

constexpr double kMagnitudeFloor = 1e-4;

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

FeatureMap to_scalar(const FeatureMap& map) {
  return map.channels() == 1 ? map : map.channel_norm();
}

double energy(const FeatureMap& map) {
  double sum = 0.0;
  for (float v : map.data()) sum += static_cast<double>(v) * v;
  return sum;
}

// Peak of a real rows x cols surface with optional 3-point parabolic
// refinement. Shifts are wrapped into (-n/2, n/2].
struct Peak {
  double row = 0.0;
  double col = 0.0;
  double value = 0.0;
  double confidence = 0.0;
};

Peak find_peak(std::span<const double> surface, int rows, int cols, bool subpixel) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < surface.size(); ++i) {
    const double v = surface[i];
    abs_sum += std::abs(v);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  const int pr = static_cast<int>(best / cols);
  const int pc = static_cast<int>(best % cols);
  auto value_at = [&](int r, int c) {
    r = (r % rows + rows) % rows;
    c = (c % cols + cols) % cols;
    return surface[static_cast<std::size_t>(r) * cols + c];
  };
  // Three-point fit of a parabola to the log of the surface (a Gaussian
  // peak model); falls back to the raw values next to non-positive samples.
  auto parabolic = [](double left, double center, double right) {
    if (left > 0.0 && center > 0.0 && right > 0.0) {
      left = std::log(left);
      center = std::log(center);
      right = std::log(right);
    }
    const double denom = left - 2.0 * center + right;
    if (!(std::abs(denom) > 1e-300)) return 0.0;
    const double offset = 0.5 * (left - right) / denom;
    return std::clamp(offset, -0.5, 0.5);
  };

  Peak peak;
  peak.row = pr;
  peak.col = pc;
  peak.value = best_value;
  if (subpixel) {
    if (rows >= 3) peak.row += parabolic(value_at(pr - 1, pc), best_value, value_at(pr + 1, pc));
    if (cols >= 3) peak.col += parabolic(value_at(pr, pc - 1), best_value, value_at(pr, pc + 1));
  }
  if (peak.row > rows / 2.0) peak.row -= rows;
  if (peak.col > cols / 2.0) peak.col -= cols;
  const double mean_abs = abs_sum / static_cast<double>(surface.size());
  peak.confidence = mean_abs > 0.0 ? std::max(best_value, 0.0) / mean_abs : 0.0;
  return peak;
}

// Unit-magnitude copy of a spectrum; zero bins stay zero.
void whiten(std::span<Complex> spectrum) {
  for (auto& v : spectrum) {
    const double mag = std::abs(v);
    v = mag > 1e-300 ? v / mag : Complex(0.0, 0.0);
  }
}

// Inverse transform of conj(A) * B for whitened half spectra, left
// unnormalized in the real buffer of `fft`. With unit-magnitude inputs the
// product is already the normalized cross-power spectrum; the missing
// 1 / (rows * cols) factor cancels in the peak location, the log-parabolic
// offset and the peak-to-mean confidence.
void cross_power_surface(std::span<const Complex> a, std::span<const Complex> b,
                         detail::RealFft2d& fft) {
  auto spec = fft.spectrum();
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = std::conj(a[i]) * b[i];
  fft.inverse();
}

double hann(int i, int n) { return 0.5 * (1.0 - std::cos(kTwoPi * (i + 0.5) / n)); }

// Hann-shaped roll-off over the outer `fraction` of the axis, flat inside.
double tukey(int i, int n, double fraction) {
  const double ramp = fraction * n;
  const double d = std::min(i + 0.5, n - i - 0.5);
  return d >= ramp ? 1.0 : 0.5 * (1.0 - std::cos(kPi * d / ramp));
}

double window_weight(Window window, int row, int col, int height, int width) {
  switch (window) {
    case Window::hann: return hann(row, height) * hann(col, width);
    case Window::tukey: return tukey(row, height, 0.125) * tukey(col, width, 0.125);
    case Window::none: break;
  }
  return 1.0;
}

}  // namespace

void RegistrationConfig::validate() const {
  if (log_polar_radial < 32 || log_polar_angular < 32)
    throw ValidationError("log-polar size must be at least 32 x 32");
  if (!(scale_min > 0.0 && scale_min < 1.0 && scale_max > 1.0))
    throw ValidationError("scale bounds must satisfy 0 < s_min < 1 < s_max");
  if (pad_factor < 1) throw ValidationError("pad_factor must be >= 1");
  if (!(min_radius_fraction > 0.0 && min_radius_fraction < max_radius_fraction &&
        max_radius_fraction <= 0.5))
    throw ValidationError("log-polar radius fractions must satisfy 0 < min < max <= 0.5");
}

Translation phase_correlate(const FeatureMap& a, const FeatureMap& b, bool subpixel) {
  if (!a.same_shape(b))
    throw DimensionError("phase_correlate needs equal shapes (" + std::to_string(a.height()) +
                         "x" + std::to_string(a.width()) + " vs " +
                         std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
  if (a.channels() != 1) throw DimensionError("phase_correlate expects single-channel maps");
  if (!(energy(a) > 0.0) || !(energy(b) > 0.0))
    throw ValidationError("phase_correlate input has zero energy");

  const int rows = a.height();
  const int cols = a.width();
  auto& fft = detail::thread_fft(rows, cols);
  auto spectrum = [&](const FeatureMap& m) {
    auto buf = fft.real();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = m.data()[i];
    fft.forward();
    std::vector<Complex> out(fft.spectrum().begin(), fft.spectrum().end());
    whiten(out);
    return out;
  };
  const auto fa = spectrum(a);
  const auto fb = spectrum(b);
  cross_power_surface(fa, fb, fft);
  const Peak peak = find_peak(fft.real(), rows, cols, subpixel);
  return Translation{peak.col, peak.row, peak.confidence};
}

FeatureMap log_polar_magnitude(const FeatureMap& map, const RegistrationConfig& cfg) {
  cfg.validate();
  const FeatureMap scalar = to_scalar(map);
  const int H = scalar.height();
  const int W = scalar.width();
  const int P = next_pow2(cfg.pad_factor * std::max(H, W));

  auto& fft = detail::thread_fft(P, P);
  auto real = fft.real();
  std::fill(real.begin(), real.end(), 0.0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      real[static_cast<std::size_t>(r) * P + c] =
          window_weight(cfg.window, r, c, H, W) * scalar.at(r, c, 0);
  fft.forward();
  const auto spec = fft.spectrum();
  const int half = fft.half_cols();
  // Log-compressed magnitude relative to the spectral peak, so the result
  // does not depend on the overall amplitude of the map.
  double peak_magnitude = 0.0;
  for (const auto& v : spec) peak_magnitude = std::max(peak_magnitude, std::abs(v));
  const double floor = kMagnitudeFloor * peak_magnitude;
  std::vector<double> magnitude(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i)
    magnitude[i] = floor > 0.0 ? std::log1p(std::abs(spec[i]) / floor) : 0.0;

  // Frequency (fy, fx) lives at (fy mod P, fx) for fx >= 0; negative fx
  // comes from the conjugate-symmetric bin (-fy, -fx).
  auto mag_at = [&](int fy, int fx) {
    if (fx < 0) {
      fx = -fx;
      fy = -fy;
    }
    fy = (fy % P + P) % P;
    return magnitude[static_cast<std::size_t>(fy) * half + fx];
  };

  const int n_r = cfg.log_polar_radial;
  const int n_a = cfg.log_polar_angular;
  const double r_min = cfg.min_radius_fraction * P;
  const double r_max = cfg.max_radius_fraction * P;
  const double log_step = std::log(r_max / r_min) / n_r;

  FeatureMap out(n_a, n_r, 1);
  for (int j = 0; j < n_a; ++j) {
    const double angle = kPi * j / n_a;
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    for (int i = 0; i < n_r; ++i) {
      const double rho = r_min * std::exp(i * log_step);
      const double fx = rho * ca;
      const double fy = rho * sa;
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double tx = fx - x0;
      const double ty = fy - y0;
      const double v = (1 - ty) * ((1 - tx) * mag_at(y0, x0) + tx * mag_at(y0, x0 + 1)) +
                       ty * ((1 - tx) * mag_at(y0 + 1, x0) + tx * mag_at(y0 + 1, x0 + 1));
      out.at(j, i, 0) = static_cast<float>(v);
    }
  }
  return out;
}

LogPolarSignature log_polar_signature(const FeatureMap& map, const RegistrationConfig& cfg) {
  const FeatureMap lp = log_polar_magnitude(map, cfg);
  const int n_a = lp.height();
  const int n_r = lp.width();

  LogPolarSignature sig;
  sig.radial = n_r;
  sig.angular = n_a;
  sig.log_step = std::log(cfg.max_radius_fraction / cfg.min_radius_fraction) / n_r;

  // The log-polar map is not tapered: the angular axis is periodic and a
  // radial taper costs more scale accuracy than its wrap-around leakage.
  double mean = 0.0;
  for (float v : lp.data()) mean += v;
  mean /= static_cast<double>(lp.size());

  auto& fft = detail::thread_fft(n_a, n_r);
  auto real = fft.real();
  for (std::size_t i = 0; i < real.size(); ++i) real[i] = lp.data()[i] - mean;
  fft.forward();
  sig.spectrum.assign(fft.spectrum().begin(), fft.spectrum().end());
  whiten(sig.spectrum);
  return sig;
}

std::array<Similarity2D, 2> estimate_scale_rotation(const LogPolarSignature& tmpl,
                                                    const LogPolarSignature& target,
                                                    const RegistrationConfig& cfg) {
  if (tmpl.radial != target.radial || tmpl.angular != target.angular ||
      tmpl.spectrum.size() != target.spectrum.size())
    throw DimensionError("log-polar signatures were computed with different configurations");

  auto& fft = detail::thread_fft(tmpl.angular, tmpl.radial);
  cross_power_surface(tmpl.spectrum, target.spectrum, fft);
  const Peak peak = find_peak(fft.real(), tmpl.angular, tmpl.radial, cfg.subpixel);

  // Target spectrum = template spectrum rotated by +gamma and shrunk by s.
  double scale = std::exp(-peak.col * tmpl.log_step);
  double confidence = peak.confidence;
  if (scale < cfg.scale_min || scale > cfg.scale_max) {
    scale = std::clamp(scale, cfg.scale_min, cfg.scale_max);
    confidence = 0.0;
  }
  const double rotation = peak.row * kPi / tmpl.angular;
  return {Similarity2D{scale, wrap_pi(rotation), confidence},
          Similarity2D{scale, wrap_pi(rotation + kPi), confidence}};
}

std::array<Similarity2D, 2> estimate_scale_rotation(const FeatureMap& tmpl,
                                                    const FeatureMap& target,
                                                    const RegistrationConfig& cfg) {
  if (tmpl.height() != target.height() || tmpl.width() != target.width())
    throw DimensionError("estimate_scale_rotation needs equal image sizes");
  const FeatureMap a = to_scalar(tmpl);
  const FeatureMap b = to_scalar(target);
  if (!(energy(a) > 0.0) || !(energy(b) > 0.0))
    throw ValidationError("estimate_scale_rotation input has zero energy");
  return estimate_scale_rotation(log_polar_signature(a, cfg), log_polar_signature(b, cfg), cfg);
}

namespace {

// Source coordinates for output pixel (row, col) under the inverse map.
struct InverseMap {
  double cx, cy, a, b;  // src = c + [a b; -b a] (p - c)
  InverseMap(int height, int width, const Similarity2D& sim)
      : cx(0.5 * (width - 1)),
        cy(0.5 * (height - 1)),
        a(std::cos(sim.rotation) / sim.scale),
        b(std::sin(sim.rotation) / sim.scale) {}
};

// Calls sink(row, col, value) with the bilinearly resampled channels of every
// output pixel. FC > 0 fixes the channel count at compile time.
template <int FC, typename Sink>
void warp_pixels_impl(const FeatureMap& map, const Similarity2D& sim, Sink&& sink) {
  const int H = map.height();
  const int W = map.width();
  const int F = FC > 0 ? FC : map.channels();
  const InverseMap inv(H, W, sim);
  const float* src = map.data().data();
  const std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(W) * F;
  constexpr int kStackChannels = 16;
  double stack_value[kStackChannels];
  std::vector<double> heap_value;
  double* value = stack_value;
  if (F > kStackChannels) {
    heap_value.resize(static_cast<std::size_t>(F));
    value = heap_value.data();
  }

  for (int row = 0; row < H; ++row) {
    const double vy = row - inv.cy;
    // Source coordinates advance linearly along a row.
    double sx = inv.cx - inv.a * inv.cx + inv.b * vy;
    double sy = inv.cy + inv.b * inv.cx + inv.a * vy;
    for (int col = 0; col < W; ++col, sx += inv.a, sy -= inv.b) {
      if (!(sx > -1.0 && sy > -1.0 && sx < W && sy < H)) {
        for (int c = 0; c < F; ++c) value[c] = 0.0;
        sink(row, col, static_cast<const double*>(value));
        continue;
      }
      // sx, sy > -1, so truncation of (v + 1) is floor(v) + 1.
      const int x0 = static_cast<int>(sx + 1.0) - 1;
      const int y0 = static_cast<int>(sy + 1.0) - 1;
      const double tx = sx - x0;
      const double ty = sy - y0;
      const double w00 = (1 - tx) * (1 - ty), w01 = tx * (1 - ty);
      const double w10 = (1 - tx) * ty, w11 = tx * ty;
      const std::ptrdiff_t o = (static_cast<std::ptrdiff_t>(y0) * W + x0) * F;
      if (x0 >= 0 && y0 >= 0 && x0 + 1 < W && y0 + 1 < H) {
        for (int c = 0; c < F; ++c)
          value[c] = w00 * src[o + c] + w01 * src[o + F + c] + w10 * src[o + stride + c] +
                     w11 * src[o + stride + F + c];
      } else {
        const bool has_x0 = x0 >= 0, has_x1 = x0 + 1 < W;
        const bool has_y0 = y0 >= 0, has_y1 = y0 + 1 < H;
        for (int c = 0; c < F; ++c) {
          double v = 0.0;
          if (has_y0 && has_x0) v += w00 * src[o + c];
          if (has_y0 && has_x1) v += w01 * src[o + F + c];
          if (has_y1 && has_x0) v += w10 * src[o + stride + c];
          if (has_y1 && has_x1) v += w11 * src[o + stride + F + c];
          value[c] = v;
        }
      }
      sink(row, col, static_cast<const double*>(value));
    }
  }
}

template <typename Sink>
void warp_pixels(const FeatureMap& map, const Similarity2D& sim, Sink&& sink) {
  switch (map.channels()) {
    case 1: return warp_pixels_impl<1>(map, sim, sink);
    case 3: return warp_pixels_impl<3>(map, sim, sink);
    default: return warp_pixels_impl<0>(map, sim, sink);
  }
}

}  // namespace

FeatureMap warp(const FeatureMap& map, const Similarity2D& sim) {
  if (sim.is_identity()) return map;
  if (!(sim.scale > 0.0)) throw ValidationError("warp scale must be positive");
  FeatureMap out(map.height(), map.width(), map.channels());
  warp_pixels(map, sim, [&](int row, int col, const double* value) {
    auto px = out.pixel(row, col);
    for (std::size_t c = 0; c < px.size(); ++c) px[c] = static_cast<float>(value[c]);
  });
  return out;
}

double warped_mse(const FeatureMap& tmpl, const Similarity2D& sim, const FeatureMap& target) {
  if (!tmpl.same_shape(target)) throw DimensionError("warped_mse shape mismatch");
  if (sim.is_identity()) return mean_squared_error(tmpl, target);
  if (!(sim.scale > 0.0)) throw ValidationError("warp scale must be positive");
  double sum = 0.0;
  const float* dst = target.data().data();
  const int F = target.channels();
  const int W = target.width();
  warp_pixels(tmpl, sim, [&](int row, int col, const double* value) {
    const float* px = dst + (static_cast<std::size_t>(row) * W + col) * F;
    for (int c = 0; c < F; ++c) {
      // Round through float so the result equals mse(warp(...), target).
      const double d = static_cast<double>(static_cast<float>(value[c])) - px[c];
      sum += d * d;
    }
  });
  return tmpl.empty() ? 0.0 : sum / static_cast<double>(tmpl.size());
}

Similarity2D brute_force_scale_rotation(const FeatureMap& tmpl, const FeatureMap& target,
                                        std::span<const double> scale_grid,
                                        std::span<const double> rotation_grid, int threads) {
  if (scale_grid.empty() || rotation_grid.empty())
    throw ValidationError("brute-force grids must be nonempty");
  if (!tmpl.same_shape(target)) throw DimensionError("brute-force shape mismatch");
  const std::size_t n_rot = rotation_grid.size();
  std::vector<double> errors(scale_grid.size() * n_rot);
  parallel_for(errors.size(), threads, [&](std::size_t i) {
    errors[i] = warped_mse(tmpl, Similarity2D{scale_grid[i / n_rot], rotation_grid[i % n_rot]},
                           target);
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < errors.size(); ++i) {
    if (errors[i] < errors[best]) {
      best = i;
    } else if (errors[i] == errors[best]) {
      const double ds_i = std::abs(scale_grid[i / n_rot] - 1.0);
      const double ds_b = std::abs(scale_grid[best / n_rot] - 1.0);
      const double dr_i = std::abs(rotation_grid[i % n_rot]);
      const double dr_b = std::abs(rotation_grid[best % n_rot]);
      if (ds_i < ds_b || (ds_i == ds_b && dr_i < dr_b)) best = i;
    }
  }
  return Similarity2D{scale_grid[best / n_rot], rotation_grid[best % n_rot], 0.0};
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> values(static_cast<std::size_t>(std::max(n, 0)));
  if (n == 1) {
    values[0] = lo;
    return values;
  }
  for (int i = 0; i < n; ++i) values[i] = lo + (hi - lo) * i / (n - 1);
  return values;
}

}  // namespace teff
