#pragma once

// Pose-distribution and per-entry evaluation metrics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "teff/estimator.hpp"
#include "teff/feature_map.hpp"
#include "teff/field.hpp"
#include "teff/geometry.hpp"
#include "teff/registration.hpp"
#include "teff/synth.hpp"

namespace teff {

enum class PoseAxis { theta, phi };

struct PoseHistogram {
  PoseAxis axis = PoseAxis::theta;
  double lo = 0.0;
  double hi = kTwoPi;
  std::vector<std::size_t> counts;
  std::vector<double> probs;
  /// Values outside [lo, hi] on the phi axis, counted in the nearest edge bin.
  std::size_t out_of_range = 0;

  int n_bins() const { return static_cast<int>(counts.size()); }
};

inline constexpr int kThetaHistogramBins = 24;
inline constexpr int kPhiHistogramBins = 12;

/// Equal-width bins over [lo, hi). Theta values are wrapped into [0, 2pi)
/// before binning when the range is the full circle.
PoseHistogram pose_histogram(std::span<const double> values, PoseAxis axis, int n_bins,
                             double lo, double hi);
PoseHistogram pose_histogram(std::span<const CameraPose> poses, PoseAxis axis, int n_bins,
                             double lo, double hi);

inline constexpr double kKlSmoothing = 1e-6;

/// sum p_i ln(p_i / q_i) after adding kKlSmoothing to every bin of both and
/// renormalizing.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const PoseHistogram& p, const PoseHistogram& q);

/// Shortest arc between two angles, in degrees within [0, 180].
double angular_error_deg(double est, double gt);

/// Mean |(pred - mean(pred)) - (gt - mean(gt))| / dataset_std over masked
/// pixels, means taken over the mask. nullopt for an empty mask.
std::optional<double> depth_error(const FeatureMap& pred, const FeatureMap& gt,
                                  const std::vector<std::uint8_t>& mask, double dataset_std);

/// Standard deviation of all positive depths pooled over the maps.
double pooled_depth_std(std::span<const FeatureMap> gt_depths);

/// Wrapped normal on [0, 2pi) integrated over equal bins.
std::vector<double> wrapped_gaussian_bins(double mean, double std, int n_bins);

struct WrappedGaussianFit {
  double mean = 0.0;
  double std = 0.0;
  double kl = 0.0;  // kl_divergence(target, fit)
};

/// Single wrapped Gaussian minimizing kl_divergence(target, fit) over a
/// mean/std grid search.
WrappedGaussianFit fit_wrapped_gaussian(std::span<const double> target);

enum class EstimateMode { argmax, sample };

struct EvalOptions {
  EstimateMode mode = EstimateMode::argmax;
  double tau = 1.0;
  std::uint64_t seed = 0;
  int threads = 1;
  /// When set, the estimated pose is re-rendered for the depth metric.
  const FeatureField* field = nullptr;
};

/// Accuracy fields (theta_err_deg, recovered, depth_err) always refer to the
/// maximum-likelihood pose `map_est`. `est` is the pose that enters the
/// distribution metrics: map_est in argmax mode, a draw from the pose
/// distribution in sample mode.
struct EntryRecord {
  std::string file;
  CameraPose gt;
  CameraPose map_est;
  CameraPose est;
  std::size_t bank_index = 0;  // of map_est
  double mse = 0.0;            // of map_est
  double theta_err_deg = 0.0;
  bool recovered = false;  // within one theta and one phi bin of the gt bin
  std::optional<double> depth_err;
  std::string error;  // non-empty when the entry failed
};

struct EvalReport {
  EstimateMode mode = EstimateMode::argmax;
  double tau = 1.0;
  std::size_t n_entries = 0;
  std::size_t n_failed = 0;
  std::optional<double> kl_theta;
  std::optional<double> kl_phi;
  std::optional<double> mean_theta_err_deg;
  std::optional<double> median_theta_err_deg;
  std::optional<double> recovery_rate_1bin;
  /// Fraction of entries with theta error at most one bank bin width.
  std::optional<double> theta_within_bin_rate;
  std::optional<double> depth_error;
  std::size_t depth_skipped = 0;
  std::vector<double> gt_theta_hist, est_theta_hist;
  std::vector<double> gt_phi_hist, est_phi_hist;
  std::vector<EntryRecord> records;
};

inline constexpr const char* kReportSchema = "teff.eval/1";

EvalReport evaluate(const LabeledDataset& dataset, const PoseBank& bank,
                    const RegistrationConfig& cfg, const EvalOptions& options = {});

/// JSON summary (without per-entry records) and its inverse.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Per-entry CSV with a header line.
void write_report_csv(std::ostream& out, const EvalReport& report);

}  // namespace teff
