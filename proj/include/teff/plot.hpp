#pragma once

// Minimal PNG output: feature-map previews and histogram overlays.

#include <filesystem>
#include <span>

#include "teff/feature_map.hpp"

namespace teff {

/// 8-bit preview of the first three channels (gray for single-channel maps),
/// linearly mapped from [lo, hi].
void write_feature_png(const std::filesystem::path& path, const FeatureMap& map, float lo,
                       float hi);

/// Bar chart of `reference` (filled) with `overlay` drawn as outlined bars on
/// top, both as probabilities over the same bins.
void write_histogram_png(const std::filesystem::path& path, std::span<const double> reference,
                         std::span<const double> overlay);

}  // namespace teff
