#include "teff/feature_map.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "teff/errors.hpp"

namespace teff {

namespace {

std::string shape_string(const FeatureMap& m) {
  return std::to_string(m.height()) + "x" + std::to_string(m.width()) + "x" +
         std::to_string(m.channels());
}

// Guards against absurd headers before allocating.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

FeatureMap::FeatureMap(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0)
    throw DimensionError("feature map dimensions must be non-negative");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

FeatureMap::FeatureMap(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 0 || width < 0 || channels < 0)
    throw DimensionError("feature map dimensions must be non-negative");
  if (data_.size() != static_cast<std::size_t>(height) * width * channels)
    throw DimensionError("feature map data size does not match " + shape_string(*this));
}

FeatureMap FeatureMap::channel_norm() const {
  FeatureMap out(height_, width_, 1);
  for (std::size_t p = 0; p < pixel_count(); ++p) {
    double sum = 0.0;
    for (int c = 0; c < channels_; ++c) {
      const double v = data_[p * channels_ + c];
      sum += v * v;
    }
    out.data_[p] = static_cast<float>(std::sqrt(sum));
  }
  return out;
}

FeatureMap FeatureMap::slice_channels(int first, int count) const {
  if (first < 0 || count < 0 || first + count > channels_)
    throw DimensionError("channel slice out of range for " + shape_string(*this));
  FeatureMap out(height_, width_, count);
  for (std::size_t p = 0; p < pixel_count(); ++p)
    for (int c = 0; c < count; ++c) out.data_[p * count + c] = data_[p * channels_ + first + c];
  return out;
}

double mean_squared_error(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_shape(b))
    throw DimensionError("mse shape mismatch: " + shape_string(a) + " vs " + shape_string(b));
  if (a.empty()) return 0.0;
  const auto da = a.data();
  const auto db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    sum += d * d;
  }
  return sum / static_cast<double>(da.size());
}

void write_feature_map(std::ostream& out, const FeatureMap& map) {
  out.write("TFM1", 4);
  detail::write_pod(out, static_cast<std::uint32_t>(map.height()));
  detail::write_pod(out, static_cast<std::uint32_t>(map.width()));
  detail::write_pod(out, static_cast<std::uint32_t>(map.channels()));
  detail::write_array(out, map.data());
  if (!out) throw std::runtime_error("failed to write feature map");
}

FeatureMap read_feature_map(std::istream& in) {
  detail::expect_magic(in, "TFM1");
  const auto h = detail::read_pod<std::uint32_t>(in, "TFM1 height");
  const auto w = detail::read_pod<std::uint32_t>(in, "TFM1 width");
  const auto f = detail::read_pod<std::uint32_t>(in, "TFM1 channels");
  const std::uint64_t count = std::uint64_t{h} * w * f;
  if (count > kMaxElements) throw FormatError("TFM1 header declares an implausible size");
  std::vector<float> data(count);
  detail::read_array(in, std::span<float>(data), "TFM1 data");
  return FeatureMap(static_cast<int>(h), static_cast<int>(w), static_cast<int>(f),
                    std::move(data));
}

void write_feature_map(const std::filesystem::path& path, const FeatureMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_feature_map(out, map);
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_feature_map(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace teff
