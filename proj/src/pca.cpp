#include "teff/pca.hpp"

#include <Eigen/Eigenvalues>

#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "teff/errors.hpp"

namespace teff {

namespace {

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

bool foreground(std::span<const std::vector<std::uint8_t>> masks, std::size_t map,
                std::size_t pixel) {
  return masks.empty() || masks[map].empty() || masks[map][pixel] != 0;
}

}  // namespace

FeatureMap read_raw_features(std::istream& in) {
  const auto h = detail::read_pod<std::uint32_t>(in, "raw feature height");
  const auto w = detail::read_pod<std::uint32_t>(in, "raw feature width");
  const auto c = detail::read_pod<std::uint32_t>(in, "raw feature channels");
  const std::uint64_t count = std::uint64_t{h} * w * c;
  if (h == 0 || w == 0 || c == 0 || count > kMaxElements)
    throw FormatError("raw feature header declares an implausible size " + std::to_string(h) +
                      "x" + std::to_string(w) + "x" + std::to_string(c));
  std::vector<float> data(count);
  detail::read_array(in, std::span<float>(data), "raw feature data");
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after raw feature data");
  return FeatureMap(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c),
                    std::move(data));
}

FeatureMap read_raw_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_raw_features(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_raw_features(std::ostream& out, const FeatureMap& map) {
  detail::write_pod(out, static_cast<std::uint32_t>(map.height()));
  detail::write_pod(out, static_cast<std::uint32_t>(map.width()));
  detail::write_pod(out, static_cast<std::uint32_t>(map.channels()));
  detail::write_array(out, map.data());
  if (!out) throw std::runtime_error("failed to write raw features");
}

void write_raw_features(const std::filesystem::path& path, const FeatureMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_raw_features(out, map);
}

std::vector<std::uint8_t> mask_from_map(const FeatureMap& mask) {
  if (mask.channels() != 1) throw DimensionError("mask must have a single channel");
  std::vector<std::uint8_t> out(mask.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.data()[i] > 0.5f;
  return out;
}

double PcaModel::explained_variance_ratio() const {
  const double total = eigenvalues.sum();
  if (!(total > 0.0)) return 0.0;
  const int k = std::min<int>(output_channels(), static_cast<int>(eigenvalues.size()));
  return eigenvalues.head(k).sum() / total;
}

PcaModel fit_pca(std::span<const FeatureMap> maps,
                 std::span<const std::vector<std::uint8_t>> masks, int k) {
  if (maps.empty()) throw ValidationError("PCA needs at least one feature map");
  if (!masks.empty() && masks.size() != maps.size())
    throw DimensionError("PCA got " + std::to_string(masks.size()) + " masks for " +
                         std::to_string(maps.size()) + " maps");
  const int C = maps.front().channels();
  if (C < k)
    throw ValidationError("PCA to " + std::to_string(k) + " channels needs C >= " +
                          std::to_string(k) + ", got C = " + std::to_string(C));
  for (std::size_t m = 0; m < maps.size(); ++m) {
    if (maps[m].channels() != C) throw DimensionError("feature maps disagree in channel count");
    if (!masks.empty() && !masks[m].empty() && masks[m].size() != maps[m].pixel_count())
      throw DimensionError("mask " + std::to_string(m) + " does not match its feature map");
  }

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(C);
  std::size_t n = 0;
  for (std::size_t m = 0; m < maps.size(); ++m)
    for (std::size_t p = 0; p < maps[m].pixel_count(); ++p) {
      if (!foreground(masks, m, p)) continue;
      const float* px = maps[m].data().data() + p * C;
      for (int c = 0; c < C; ++c) sum[c] += px[c];
      ++n;
    }
  if (n == 0) throw ValidationError("PCA found no foreground pixels");
  const Eigen::VectorXd mean = sum / static_cast<double>(n);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(C, C);
  Eigen::VectorXd x(C);
  for (std::size_t m = 0; m < maps.size(); ++m)
    for (std::size_t p = 0; p < maps[m].pixel_count(); ++p) {
      if (!foreground(masks, m, p)) continue;
      const float* px = maps[m].data().data() + p * C;
      for (int c = 0; c < C; ++c) x[c] = px[c] - mean[c];
      cov.selfadjointView<Eigen::Lower>().rankUpdate(x);
    }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("PCA eigensolver failed");

  PcaModel model;
  model.mean = mean;
  model.eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);
  model.components = Eigen::MatrixXd::Zero(k, C);
  const double top = model.eigenvalues[0];
  for (int i = 0; i < k; ++i) {
    const double lambda = model.eigenvalues[i];
    if (!(lambda > 1e-12 * std::max(top, 1e-300)) || !(top > 0.0)) {
      ++model.degenerate;
      continue;
    }
    Eigen::VectorXd v = solver.eigenvectors().col(C - 1 - i);
    // Deterministic sign: largest-magnitude coordinate positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    model.components.row(i) = v.transpose();
  }
  return model;
}

FeatureMap project(const FeatureMap& map, const PcaModel& model,
                   const std::vector<std::uint8_t>& mask) {
  const int C = map.channels();
  if (C != model.mean.size())
    throw DimensionError("map has " + std::to_string(C) + " channels, PCA model expects " +
                         std::to_string(model.mean.size()));
  if (!mask.empty() && mask.size() != map.pixel_count())
    throw DimensionError("mask does not match the feature map");
  const int k = model.output_channels();
  FeatureMap out(map.height(), map.width(), k);
  Eigen::VectorXd x(C);
  for (std::size_t p = 0; p < map.pixel_count(); ++p) {
    if (!mask.empty() && !mask[p]) continue;
    const float* px = map.data().data() + p * C;
    for (int c = 0; c < C; ++c) x[c] = px[c] - model.mean[c];
    const Eigen::VectorXd y = model.components * x;
    for (int i = 0; i < k; ++i) out.data()[p * k + i] = static_cast<float>(y[i]);
  }
  return out;
}

FeatureMap apply_mask(const FeatureMap& map, const std::vector<std::uint8_t>& mask) {
  if (mask.empty()) return map;
  if (mask.size() != map.pixel_count()) throw DimensionError("mask does not match the feature map");
  FeatureMap out = map;
  const int C = map.channels();
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (!mask[p])
      for (int c = 0; c < C; ++c) out.data()[p * C + c] = 0.0f;
  return out;
}

}  // namespace teff
