#pragma once

// Procedural template fields, perturbed instances and labeled datasets with
// known ground-truth poses.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "teff/field.hpp"
#include "teff/geometry.hpp"

namespace teff {

/// What the feature channels of a field carry.
///   part_id:    a fixed vector per part, independent of appearance
///   color_copy: the RGB color (F must be 3)
///   gray_copy:  luminance repeated over all F channels
enum class FeatureMode { part_id, color_copy, gray_copy };

std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view text);

struct TemplateSpec {
  std::uint64_t seed = 1;
  std::array<int, 3> dims{48, 48, 48};
  /// Body, cabin and wheels, then (n_parts - 3) random mirrored blobs.
  int n_parts = 4;
  /// 0 keeps the object symmetric under x -> -x and y -> -y. Positive values
  /// add a front marker and shift the cabin backwards.
  double asymmetry = 1.0;
  FeatureMode feature_mode = FeatureMode::part_id;
  int feature_channels = 3;

  void validate() const;
};

FeatureField make_template(const TemplateSpec& spec);

/// Smooth low-frequency perturbation: density is scaled by up to
/// 1 +- strength/2, colors shift by up to strength, part-id features by at
/// most strength/8. With `follow` set to color_copy or gray_copy the
/// features are recomputed from the perturbed colors instead.
FeatureField make_instance(const FeatureField& tmpl, std::uint64_t seed, double strength,
                           FeatureMode follow = FeatureMode::part_id);

struct AzimuthComponent {
  double mean = 0.0;  // radians
  double std = 0.0;   // radians
  double weight = 1.0;
};

struct PoseDistSpec {
  std::vector<AzimuthComponent> components{AzimuthComponent{}};
  double phi_lo = deg_to_rad(85.0);
  double phi_hi = deg_to_rad(95.0);
  double gamma_std = 0.0;
  double r_lo = 4.0;
  double r_hi = 4.0;

  void validate() const;
};

/// "mean:std:weight,..." in degrees, e.g. "90:15:0.5,270:15:0.5".
/// Weights are normalized to sum to one.
std::vector<AzimuthComponent> parse_azimuth_mixture(std::string_view text);

CameraPose sample_gt_pose(const PoseDistSpec& dist, std::mt19937_64& rng);

struct DatasetEntry {
  std::filesystem::path file;  // feature map, TFM1
  std::filesystem::path depth_file;
  CameraPose pose;
  std::uint64_t seed = 0;
};

struct LabeledDataset {
  std::filesystem::path manifest;
  std::vector<DatasetEntry> entries;
  float feature_min = 0.0f;
  float feature_max = 0.0f;
};

struct DatasetOptions {
  Intrinsics intrinsics;
  RenderConfig render_config;
  double instance_strength = 0.0;
  FeatureMode follow = FeatureMode::part_id;
  bool write_png = false;
  int threads = 1;
};

/// Entry i uses seed + i for both its pose draw and its instance. Writes
/// entry_NNNNN.tfm, entry_NNNNN.depth.tfm and manifest.csv into out_dir.
LabeledDataset make_dataset(const FeatureField& tmpl, const PoseDistSpec& dist, std::size_t n,
                            std::uint64_t seed, const std::filesystem::path& out_dir,
                            const DatasetOptions& options = {});

/// Parses a manifest written by make_dataset. Paths are resolved against the
/// manifest's directory.
LabeledDataset read_manifest(const std::filesystem::path& manifest);

}  // namespace teff
