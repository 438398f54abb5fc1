#pragma once

// Frequency-domain registration of feature maps: translation by phase
// correlation, scale and in-plane rotation by Fourier-Mellin (phase
// correlation of log-polar magnitude spectra), similarity warping and an
// exhaustive grid-search oracle.

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "teff/feature_map.hpp"

namespace teff {

/// Similarity about the image center mapping a template onto a target:
/// target(c + scale * R(rotation) * (p - c)) = template(p). Rows grow
/// downward, so a positive rotation turns content clockwise on screen.
struct Similarity2D {
  double scale = 1.0;
  double rotation = 0.0;  // radians, [-pi, pi)
  double confidence = 0.0;

  bool is_identity() const { return scale == 1.0 && rotation == 0.0; }
};

/// Spatial apodization before the spectrum. `tukey` only rolls off the outer
/// eighth of each axis; a full Hann taper distorts centered objects whose
/// extent changes with scale.
enum class Window { none, hann, tukey };

struct RegistrationConfig {
  Window window = Window::tukey;
  int log_polar_radial = 256;
  int log_polar_angular = 256;
  double scale_min = 0.5;
  double scale_max = 2.0;
  bool subpixel = true;
  /// Spectra are computed on a zero-padded square of pad_factor * max(H, W)
  /// (rounded up to a power of two) before log-polar resampling.
  int pad_factor = 4;
  /// Radial extent of the log-polar map, as fractions of the padded size.
  double min_radius_fraction = 1.0 / 64.0;
  double max_radius_fraction = 0.45;

  void validate() const;
  friend bool operator==(const RegistrationConfig&, const RegistrationConfig&) = default;
};

struct Translation {
  double dx = 0.0;  // columns
  double dy = 0.0;  // rows
  double confidence = 0.0;
};

/// Shift d such that b(p) ~= a(p - d), from the peak of the inverse
/// transform of the normalized cross-power spectrum. Both inputs must be
/// single-channel with equal dimensions and nonzero energy. Confidence is
/// peak / mean(|surface|).
Translation phase_correlate(const FeatureMap& a, const FeatureMap& b, bool subpixel = true);

/// Precomputed Fourier-Mellin signature of one map: the spectrum of its
/// windowed log-polar magnitude spectrum. Caching this lets a bank of
/// templates be matched against a query with one inverse FFT per pair.
struct LogPolarSignature {
  int radial = 0;
  int angular = 0;
  double log_step = 0.0;  // natural-log radius increment per radial sample
  /// Unit-magnitude half spectrum, angular x (radial / 2 + 1), row-major.
  std::vector<std::complex<double>> spectrum;
};

LogPolarSignature log_polar_signature(const FeatureMap& map, const RegistrationConfig& cfg);

/// Log-polar resampling of the (windowed, padded) magnitude spectrum. Rows
/// are angles in [0, pi), columns log-radii. Exposed for diagnostics.
FeatureMap log_polar_magnitude(const FeatureMap& map, const RegistrationConfig& cfg);

/// Both rotation hypotheses (theta and theta + pi, first one within
/// (-pi/2, pi/2]) with their shared scale. A scale outside the configured
/// bounds is clamped and reported with confidence 0.
std::array<Similarity2D, 2> estimate_scale_rotation(const LogPolarSignature& tmpl,
                                                    const LogPolarSignature& target,
                                                    const RegistrationConfig& cfg);
std::array<Similarity2D, 2> estimate_scale_rotation(const FeatureMap& tmpl,
                                                    const FeatureMap& target,
                                                    const RegistrationConfig& cfg);

/// Inverse-mapped similarity warp about the image center, bilinear per
/// channel, zero outside the source. The identity returns the input as is.
FeatureMap warp(const FeatureMap& map, const Similarity2D& sim);

/// mse(warp(tmpl, sim), target) without materializing the warped map.
double warped_mse(const FeatureMap& tmpl, const Similarity2D& sim, const FeatureMap& target);

/// Exhaustive search over scale_grid x rotation_grid minimizing the warped
/// MSE. Ties go to the scale nearest 1, then the rotation nearest 0.
Similarity2D brute_force_scale_rotation(const FeatureMap& tmpl, const FeatureMap& target,
                                        std::span<const double> scale_grid,
                                        std::span<const double> rotation_grid,
                                        int threads = 1);

/// n evenly spaced values covering [lo, hi] inclusive.
std::vector<double> linspace(double lo, double hi, int n);

}  // namespace teff
