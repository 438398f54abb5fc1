#pragma once

// PCA reduction of high-dimensional feature maps to a few channels.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "teff/feature_map.hpp"

namespace teff {

// Raw input layout: u32 H, W, C then H*W*C f32 values, channel-fastest, no
// magic. Masks use the same layout with C == 1; values > 0.5 are foreground.
FeatureMap read_raw_features(std::istream& in);
FeatureMap read_raw_features(const std::filesystem::path& path);
void write_raw_features(std::ostream& out, const FeatureMap& map);
void write_raw_features(const std::filesystem::path& path, const FeatureMap& map);

/// Foreground flags from a single-channel mask map.
std::vector<std::uint8_t> mask_from_map(const FeatureMap& mask);

struct PcaModel {
  Eigen::VectorXd mean;         // C
  Eigen::MatrixXd components;   // k x C, rows sorted by decreasing variance
  Eigen::VectorXd eigenvalues;  // all C covariance eigenvalues, decreasing
  /// Leading components whose variance is numerically zero. They are kept
  /// as zero rows so projections still have k channels.
  int degenerate = 0;

  int output_channels() const { return static_cast<int>(components.rows()); }
  /// Share of the total variance captured by the kept components.
  double explained_variance_ratio() const;
};

/// Fits on the foreground pixels of every map (all pixels when `masks` is
/// empty). Throws when C < k or no pixel is foreground.
PcaModel fit_pca(std::span<const FeatureMap> maps,
                 std::span<const std::vector<std::uint8_t>> masks, int k = 3);

/// Projects onto the model's components; masked-out pixels become zero.
FeatureMap project(const FeatureMap& map, const PcaModel& model,
                   const std::vector<std::uint8_t>& mask = {});

/// Zeroes masked-out pixels, keeping the channels as they are.
FeatureMap apply_mask(const FeatureMap& map, const std::vector<std::uint8_t>& mask);

}  // namespace teff
