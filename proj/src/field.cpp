#include "teff/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "teff/errors.hpp"
#include "teff/parallel.hpp"

namespace teff {

FeatureField::FeatureField(std::array<int, 3> dims, Aabb bbox, int feature_channels)
    : dims_(dims), bbox_(std::move(bbox)), feature_channels_(feature_channels) {
  for (int d : dims_)
    if (d < 2) throw ValidationError("field dims must be >= 2 per axis");
  for (int a = 0; a < 3; ++a)
    if (!(bbox_.min[a] < bbox_.max[a])) throw ValidationError("field bbox min must be < max");
  if (feature_channels < 0) throw ValidationError("feature channel count must be >= 0");
  density_.assign(voxel_count(), 0.0f);
  feature_.assign(voxel_count() * feature_channels_, 0.0f);
  color_.assign(voxel_count() * 3, 0.0f);
}

Eigen::Vector3d FeatureField::voxel_position(int ix, int iy, int iz) const {
  const Eigen::Vector3d extent = bbox_.max - bbox_.min;
  return bbox_.min + Eigen::Vector3d(extent.x() * ix / (dims_[0] - 1),
                                     extent.y() * iy / (dims_[1] - 1),
                                     extent.z() * iz / (dims_[2] - 1));
}

void FeatureField::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims_[a] < 2) throw ValidationError("field dims must be >= 2 per axis");
    if (!(bbox_.min[a] < bbox_.max[a])) throw ValidationError("field bbox min must be < max");
  }
  for (std::size_t v = 0; v < density_.size(); ++v) {
    const float s = density_[v];
    if (std::isnan(s)) throw ValidationError("density is NaN at voxel " + std::to_string(v));
    if (s < 0.0f || !std::isfinite(s))
      throw ValidationError("density must be finite and >= 0 at voxel " + std::to_string(v) +
                            " (got " + std::to_string(s) + ")");
  }
  for (std::size_t i = 0; i < color_.size(); ++i) {
    const float c = color_[i];
    if (!(c >= 0.0f && c <= 1.0f))
      throw ValidationError("color outside [0,1] at voxel " + std::to_string(i / 3));
  }
  for (std::size_t i = 0; i < feature_.size(); ++i)
    if (!std::isfinite(feature_[i]))
      throw ValidationError("non-finite feature at voxel " +
                            std::to_string(i / std::max(feature_channels_, 1)));
}

namespace {

struct Trilinear {
  std::size_t corner[8];
  double weight[8];
};

// Fills the eight corner indices/weights; false when outside the box.
bool trilinear_setup(const FeatureField& field, const Eigen::Vector3d& p, Trilinear& out) {
  const auto& box = field.bbox();
  const auto& dims = field.dims();
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= box.min[a] && p[a] <= box.max[a])) return false;
    const double g = (p[a] - box.min[a]) / (box.max[a] - box.min[a]) * (dims[a] - 1);
    int i = static_cast<int>(std::floor(g));
    i = std::clamp(i, 0, dims[a] - 2);
    base[a] = i;
    frac[a] = g - i;
  }
  int n = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        out.corner[n] = field.index(base[0] + dx, base[1] + dy, base[2] + dz);
        out.weight[n] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                        (dz ? frac[2] : 1.0 - frac[2]);
        ++n;
      }
  return true;
}

double interp_scalar(std::span<const float> values, const Trilinear& t) {
  double sum = 0.0;
  for (int n = 0; n < 8; ++n) sum += t.weight[n] * values[t.corner[n]];
  return sum;
}

void interp_vector(std::span<const float> values, int channels, const Trilinear& t,
                   double* out) {
  for (int c = 0; c < channels; ++c) out[c] = 0.0;
  for (int n = 0; n < 8; ++n) {
    const float* v = values.data() + t.corner[n] * channels;
    for (int c = 0; c < channels; ++c) out[c] += t.weight[n] * v[c];
  }
}

}  // namespace

FieldSample sample_field(const FeatureField& field, const Eigen::Vector3d& point) {
  FieldSample s;
  s.feature.assign(field.feature_channels(), 0.0f);
  Trilinear t;
  if (!trilinear_setup(field, point, t)) return s;
  // Exact voxel hits return stored values bit-for-bit.
  for (int n = 0; n < 8; ++n) {
    if (t.weight[n] == 1.0) {
      const std::size_t v = t.corner[n];
      s.density = field.density()[v];
      for (int c = 0; c < 3; ++c) s.color[c] = field.color()[v * 3 + c];
      for (int c = 0; c < field.feature_channels(); ++c)
        s.feature[c] = field.feature()[v * field.feature_channels() + c];
      return s;
    }
  }
  s.density = static_cast<float>(interp_scalar(field.density(), t));
  double color[3];
  interp_vector(field.color(), 3, t, color);
  for (int c = 0; c < 3; ++c) s.color[c] = static_cast<float>(color[c]);
  std::vector<double> feature(field.feature_channels());
  interp_vector(field.feature(), field.feature_channels(), t, feature.data());
  for (int c = 0; c < field.feature_channels(); ++c) s.feature[c] = static_cast<float>(feature[c]);
  return s;
}

void RenderConfig::validate() const {
  if (n_samples < 2) throw ValidationError("render needs n_samples >= 2");
  if (!(min_alpha_for_depth >= 0.0 && min_alpha_for_depth <= 1.0))
    throw ValidationError("min_alpha_for_depth must lie in [0, 1]");
}

std::vector<double> ray_weights(const FeatureField& field, const Ray& ray, int n_samples) {
  std::vector<double> weights(static_cast<std::size_t>(n_samples), 0.0);
  if (ray.empty()) return weights;
  const double delta = (ray.t_far - ray.t_near) / n_samples;
  double transmittance = 1.0;
  Trilinear t;
  for (int i = 0; i < n_samples; ++i) {
    const Eigen::Vector3d p = ray.origin + (ray.t_near + (i + 0.5) * delta) * ray.direction;
    const double sigma = trilinear_setup(field, p, t) ? interp_scalar(field.density(), t) : 0.0;
    const double alpha = step_alpha(sigma, delta);
    weights[i] = transmittance * alpha;
    transmittance *= 1.0 - alpha;
  }
  return weights;
}

RenderOutput render(const FeatureField& field, const CameraPose& pose, const Intrinsics& intr,
                    const RenderConfig& cfg, int threads) {
  cfg.validate();
  intr.validate();
  const int H = intr.height;
  const int W = intr.width;
  const int F = field.feature_channels();
  const RayGrid rays = generate_rays(pose_to_extrinsics(pose), intr, field.bbox());

  RenderOutput out;
  out.premultiplied_color = FeatureMap(H, W, 3);
  out.feature_map = FeatureMap(H, W, F);
  out.depth_map = FeatureMap(H, W, 1);
  out.alpha_map = FeatureMap(H, W, 1);

  parallel_for(static_cast<std::size_t>(H), threads, [&](std::size_t row_index) {
    const int row = static_cast<int>(row_index);
    std::vector<double> feat_acc(F);
    std::vector<double> feat_sample(F);
    Trilinear t;
    for (int col = 0; col < W; ++col) {
      const Ray& ray = rays.at(row, col);
      if (ray.empty()) continue;
      const double delta = (ray.t_far - ray.t_near) / cfg.n_samples;
      double transmittance = 1.0;
      double weight_sum = 0.0;
      double depth_acc = 0.0;
      double color_acc[3] = {0.0, 0.0, 0.0};
      std::fill(feat_acc.begin(), feat_acc.end(), 0.0);
      for (int i = 0; i < cfg.n_samples; ++i) {
        const double ti = ray.t_near + (i + 0.5) * delta;
        const Eigen::Vector3d p = ray.origin + ti * ray.direction;
        if (!trilinear_setup(field, p, t)) continue;
        const double sigma = interp_scalar(field.density(), t);
        if (sigma <= 0.0) continue;
        const double alpha = step_alpha(sigma, delta);
        const double w = transmittance * alpha;
        double color[3];
        interp_vector(field.color(), 3, t, color);
        interp_vector(field.feature(), F, t, feat_sample.data());
        for (int c = 0; c < 3; ++c) color_acc[c] += w * color[c];
        for (int c = 0; c < F; ++c) feat_acc[c] += w * feat_sample[c];
        depth_acc += w * ti;
        weight_sum += w;
        transmittance *= 1.0 - alpha;
      }
      for (int c = 0; c < 3; ++c)
        out.premultiplied_color.at(row, col, c) = static_cast<float>(color_acc[c]);
      for (int c = 0; c < F; ++c) out.feature_map.at(row, col, c) = static_cast<float>(feat_acc[c]);
      out.alpha_map.at(row, col, 0) = static_cast<float>(weight_sum);
      if (weight_sum >= cfg.min_alpha_for_depth && weight_sum > 0.0)
        out.depth_map.at(row, col, 0) = static_cast<float>(depth_acc / weight_sum);
    }
  });

  out.color_map = out.premultiplied_color;
  if (cfg.white_background) {
    for (int row = 0; row < H; ++row)
      for (int col = 0; col < W; ++col) {
        const float background = 1.0f - out.alpha_map.at(row, col, 0);
        for (int c = 0; c < 3; ++c) out.color_map.at(row, col, c) += background;
      }
  }
  return out;
}

void write_field(std::ostream& out, const FeatureField& field) {
  out.write("TFF1", 4);
  for (int d : field.dims()) detail::write_pod(out, static_cast<std::uint32_t>(d));
  detail::write_pod(out, static_cast<std::uint32_t>(field.feature_channels()));
  for (int a = 0; a < 3; ++a) detail::write_pod(out, static_cast<float>(field.bbox().min[a]));
  for (int a = 0; a < 3; ++a) detail::write_pod(out, static_cast<float>(field.bbox().max[a]));
  detail::write_array(out, field.density());
  detail::write_array(out, field.feature());
  detail::write_array(out, field.color());
  if (!out) throw std::runtime_error("failed to write field");
}

FeatureField read_field(std::istream& in) {
  detail::expect_magic(in, "TFF1");
  std::array<int, 3> dims{};
  for (int& d : dims) d = static_cast<int>(detail::read_pod<std::uint32_t>(in, "TFF1 dims"));
  const auto channels = detail::read_pod<std::uint32_t>(in, "TFF1 channel count");
  if (static_cast<std::uint64_t>(dims[0]) * dims[1] * dims[2] * (channels + 4) >
      (std::uint64_t{1} << 32))
    throw FormatError("TFF1 header declares an implausible size");
  Aabb box;
  for (int a = 0; a < 3; ++a) box.min[a] = detail::read_pod<float>(in, "TFF1 bbox");
  for (int a = 0; a < 3; ++a) box.max[a] = detail::read_pod<float>(in, "TFF1 bbox");
  FeatureField field;
  try {
    field = FeatureField(dims, box, static_cast<int>(channels));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("TFF1 header: ") + e.what());
  }
  detail::read_array(in, field.density(), "TFF1 density");
  detail::read_array(in, field.feature(), "TFF1 feature");
  detail::read_array(in, field.color(), "TFF1 color");
  field.validate();
  return field;
}

void write_field(const std::filesystem::path& path, const FeatureField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_field(out, field);
}

FeatureField read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_field(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace teff
