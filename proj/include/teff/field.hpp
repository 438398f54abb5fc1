#pragma once

// Dense voxel feature field with a shared-density volume renderer.

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "teff/feature_map.hpp"
#include "teff/geometry.hpp"

namespace teff {

/// Density, feature and color samples on a regular grid. Voxel (ix, iy, iz)
/// sits at bbox.min + (ix, iy, iz) * spacing, so the outermost voxels lie on
/// the box faces. Linear index is (ix * gy + iy) * gz + iz.
class FeatureField {
 public:
  FeatureField() = default;
  FeatureField(std::array<int, 3> dims, Aabb bbox, int feature_channels);

  const std::array<int, 3>& dims() const { return dims_; }
  const Aabb& bbox() const { return bbox_; }
  int feature_channels() const { return feature_channels_; }
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }
  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * dims_[1] + iy) * dims_[2] + iz;
  }
  Eigen::Vector3d voxel_position(int ix, int iy, int iz) const;

  std::span<float> density() { return density_; }
  std::span<const float> density() const { return density_; }
  /// voxel_count * F, channel-fastest.
  std::span<float> feature() { return feature_; }
  std::span<const float> feature() const { return feature_; }
  /// voxel_count * 3, channel-fastest.
  std::span<float> color() { return color_; }
  std::span<const float> color() const { return color_; }

  /// Throws ValidationError naming the first offending voxel.
  void validate() const;

  friend bool operator==(const FeatureField&, const FeatureField&) = default;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Aabb bbox_;
  int feature_channels_ = 0;
  std::vector<float> density_;
  std::vector<float> feature_;
  std::vector<float> color_;
};

inline bool operator==(const Aabb& a, const Aabb& b) { return a.min == b.min && a.max == b.max; }

struct FieldSample {
  float density = 0.0f;
  std::array<float, 3> color{};
  std::vector<float> feature;
};

/// Trilinear lookup; zero everywhere outside the bounding box.
FieldSample sample_field(const FeatureField& field, const Eigen::Vector3d& point);

struct RenderConfig {
  int n_samples = 64;
  bool white_background = false;
  /// Pixels whose accumulated weight is below this report depth 0.
  double min_alpha_for_depth = 0.5;

  void validate() const;
};

struct RenderOutput {
  FeatureMap color_map;    // H x W x 3, composited over the background
  FeatureMap feature_map;  // H x W x F, zero background
  FeatureMap depth_map;    // H x W x 1, expected termination distance
  FeatureMap alpha_map;    // H x W x 1, accumulated weight

  /// Color before background compositing.
  FeatureMap premultiplied_color;
};

/// Opacity of one marching step.
inline double step_alpha(double sigma, double delta) { return -std::expm1(-sigma * delta); }

/// Uniform ray marching with alpha_i = 1 - exp(-sigma_i * delta) and weights
/// w_i = T_i * alpha_i shared across color, feature and depth.
RenderOutput render(const FeatureField& field, const CameraPose& pose, const Intrinsics& intr,
                    const RenderConfig& cfg, int threads = 1);

/// Per-ray compositing weights (exposed for invariant checks).
std::vector<double> ray_weights(const FeatureField& field, const Ray& ray, int n_samples);

// TFF1 container, see README for the byte layout.
void write_field(std::ostream& out, const FeatureField& field);
FeatureField read_field(std::istream& in);
void write_field(const std::filesystem::path& path, const FeatureField& field);
FeatureField read_field(const std::filesystem::path& path);

}  // namespace teff
