#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace teff {

/// H x W x F image-space array, channel-fastest: (row * W + col) * F + ch.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int height, int width, int channels, float fill = 0.0f);
  FeatureMap(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int row, int col, int ch) { return data_[offset(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data_[offset(row, col, ch)]; }

  std::span<float> pixel(int row, int col) {
    return {data_.data() + offset(row, col, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const float> pixel(int row, int col) const {
    return {data_.data() + offset(row, col, 0), static_cast<std::size_t>(channels_)};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_shape(const FeatureMap& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// Single-channel map holding the per-pixel L2 norm across channels.
  FeatureMap channel_norm() const;
  /// Keeps channels [first, first + count).
  FeatureMap slice_channels(int first, int count) const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t offset(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Mean over pixels and channels of the squared difference.
double mean_squared_error(const FeatureMap& a, const FeatureMap& b);

// TFM1 (little-endian): "TFM1", u32 H, W, F, then H*W*F f32 values.
void write_feature_map(std::ostream& out, const FeatureMap& map);
FeatureMap read_feature_map(std::istream& in);
void write_feature_map(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_feature_map(const std::filesystem::path& path);

}  // namespace teff
