#include "teff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "teff/errors.hpp"
#include "teff/feature_map.hpp"
#include "teff/parallel.hpp"
#include "teff/plot.hpp"

namespace teff {

namespace {

constexpr double kDensity = 40.0;
constexpr double kEdgeSoftness = 0.08;

struct Ellipsoid {
  Eigen::Vector3d center;
  Eigen::Vector3d radii;
  int part = 0;
};

// Copies of `e` mirrored through the x = 0 and y = 0 planes (duplicates
// collapse when the center lies on a plane).
void add_mirrored(std::vector<Ellipsoid>& parts, const Ellipsoid& e) {
  for (double sx : {1.0, -1.0}) {
    if (sx < 0 && e.center.x() == 0.0) continue;
    for (double sy : {1.0, -1.0}) {
      if (sy < 0 && e.center.y() == 0.0) continue;
      Ellipsoid m = e;
      m.center.x() *= sx;
      m.center.y() *= sy;
      parts.push_back(m);
    }
  }
}

std::vector<float> part_feature(int part, int channels) {
  std::vector<float> f(static_cast<std::size_t>(channels), 0.0f);
  if (channels == 3) {
    static constexpr float table[][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0},
                                         {0, 1, 1}, {1, 0, 1}, {0.5f, 0.5f, 0.5f}};
    const auto& row = table[part % 7];
    std::copy(row, row + 3, f.begin());
    return f;
  }
  f[static_cast<std::size_t>(part % channels)] = 1.0f;
  if (part >= channels) f[static_cast<std::size_t>((part / channels + part) % channels)] += 0.5f;
  return f;
}

float luminance(const float* rgb) { return 0.299f * rgb[0] + 0.587f * rgb[1] + 0.114f * rgb[2]; }

void fill_features_from_color(FeatureField& field, FeatureMode mode) {
  const int F = field.feature_channels();
  auto color = field.color();
  auto feature = field.feature();
  for (std::size_t v = 0; v < field.voxel_count(); ++v) {
    const float* rgb = &color[3 * v];
    for (int c = 0; c < F; ++c)
      feature[v * F + c] = mode == FeatureMode::color_copy ? rgb[c] : luminance(rgb);
  }
}

// Sum of a few random low-frequency plane waves, roughly within [-1, 1].
class SmoothNoise {
 public:
  SmoothNoise(std::mt19937_64& rng, int waves = 4) {
    std::normal_distribution<double> freq(0.0, 1.5);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    for (int i = 0; i < waves; ++i) {
      Wave w;
      w.k = Eigen::Vector3d(freq(rng), freq(rng), freq(rng));
      w.phase = phase(rng);
      waves_.push_back(w);
    }
  }

  double operator()(const Eigen::Vector3d& p) const {
    double sum = 0.0;
    for (const auto& w : waves_) sum += std::cos(w.k.dot(p) + w.phase);
    return sum / std::sqrt(2.0 * static_cast<double>(waves_.size()));
  }

 private:
  struct Wave {
    Eigen::Vector3d k;
    double phase;
  };
  std::vector<Wave> waves_;
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string entry_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "entry_%05zu", i);
  return buf;
}

}  // namespace

std::string_view to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::part_id: return "part-id";
    case FeatureMode::color_copy: return "color-copy";
    case FeatureMode::gray_copy: return "gray-copy";
  }
  return "?";
}

FeatureMode parse_feature_mode(std::string_view text) {
  if (text == "part-id") return FeatureMode::part_id;
  if (text == "color-copy") return FeatureMode::color_copy;
  if (text == "gray-copy") return FeatureMode::gray_copy;
  throw ValidationError("unknown feature mode '" + std::string(text) +
                        "' (expected part-id, color-copy or gray-copy)");
}

void TemplateSpec::validate() const {
  if (n_parts < 2) throw ValidationError("template needs n_parts >= 2");
  if (!(asymmetry >= 0.0)) throw ValidationError("asymmetry must be >= 0");
  if (feature_channels < 1) throw ValidationError("feature_channels must be >= 1");
  if (feature_mode == FeatureMode::color_copy && feature_channels != 3)
    throw ValidationError("color-copy features need feature_channels == 3");
  for (int d : dims)
    if (d < 2) throw ValidationError("template dims must be >= 2");
}

FeatureField make_template(const TemplateSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double shift = 0.25 * std::min(spec.asymmetry, 1.0);
  std::vector<Ellipsoid> parts;
  add_mirrored(parts, {{0.0, 0.0, -0.1}, {0.75, 0.38, 0.22}, 0});
  add_mirrored(parts, {{-shift, 0.0, 0.18}, {0.38, 0.3, 0.16}, 1});
  if (spec.n_parts > 2) add_mirrored(parts, {{0.45, 0.36, -0.3}, {0.16, 0.06, 0.16}, 2});
  for (int p = 3; p < spec.n_parts; ++p) {
    const Eigen::Vector3d center(0.6 * unit(rng), 0.35 * unit(rng), -0.25 + 0.5 * unit(rng));
    const Eigen::Vector3d radii(0.08 + 0.12 * unit(rng), 0.06 + 0.08 * unit(rng),
                                0.06 + 0.08 * unit(rng));
    add_mirrored(parts, {center, radii, p});
  }
  const int marker = spec.n_parts;
  if (spec.asymmetry > 0.0) {
    const double size = std::min(spec.asymmetry, 1.0);
    parts.push_back({{0.72, 0.0, 0.02}, {0.08 + 0.1 * size, 0.1 + 0.1 * size, 0.06 + 0.08 * size},
                     marker});
  }

  std::vector<std::array<float, 3>> part_color(static_cast<std::size_t>(marker + 1));
  for (auto& c : part_color)
    for (auto& v : c) v = static_cast<float>(0.15 + 0.7 * unit(rng));

  const int F = spec.feature_channels;
  FeatureField field(spec.dims, Aabb{}, F);
  std::vector<std::vector<float>> part_feat;
  for (int p = 0; p <= marker; ++p)
    part_feat.push_back(p == marker ? std::vector<float>(static_cast<std::size_t>(F), 1.0f)
                                    : part_feature(p, F));

  auto density = field.density();
  auto color = field.color();
  auto feature = field.feature();
  const auto [gx, gy, gz] = spec.dims;
  std::vector<double> weight(part_color.size());
  for (int ix = 0; ix < gx; ++ix)
    for (int iy = 0; iy < gy; ++iy)
      for (int iz = 0; iz < gz; ++iz) {
        const Eigen::Vector3d p = field.voxel_position(ix, iy, iz);
        std::fill(weight.begin(), weight.end(), 0.0);
        double occupancy = 0.0;
        for (const auto& e : parts) {
          const double d = ((p - e.center).array() / e.radii.array()).matrix().norm();
          const double occ = 1.0 / (1.0 + std::exp((d - 1.0) / kEdgeSoftness));
          occupancy = std::max(occupancy, occ);
          weight[static_cast<std::size_t>(e.part)] += occ;
        }
        double total = 0.0;
        for (double w : weight) total += w;
        const std::size_t v = field.index(ix, iy, iz);
        density[v] = static_cast<float>(kDensity * occupancy);
        if (!(total > 1e-12)) continue;
        for (int c = 0; c < 3; ++c) {
          double sum = 0.0;
          for (std::size_t q = 0; q < weight.size(); ++q) sum += weight[q] * part_color[q][c];
          color[3 * v + c] = static_cast<float>(sum / total);
        }
        for (int c = 0; c < F; ++c) {
          double sum = 0.0;
          for (std::size_t q = 0; q < weight.size(); ++q) sum += weight[q] * part_feat[q][c];
          feature[v * F + c] = static_cast<float>(sum / total);
        }
      }
  if (spec.feature_mode != FeatureMode::part_id) fill_features_from_color(field, spec.feature_mode);
  return field;
}

FeatureField make_instance(const FeatureField& tmpl, std::uint64_t seed, double strength,
                           FeatureMode follow) {
  if (!(strength >= 0.0 && strength <= 1.0))
    throw ValidationError("instance strength must lie in [0, 1]");
  if (follow == FeatureMode::color_copy && tmpl.feature_channels() != 3)
    throw ValidationError("color-copy features need 3 feature channels");
  FeatureField out = tmpl;
  if (strength == 0.0) return out;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset(-0.5, 0.5);
  const SmoothNoise density_noise(rng);
  std::array<double, 3> color_offset{};
  std::vector<SmoothNoise> color_noise;
  for (int c = 0; c < 3; ++c) {
    color_offset[static_cast<std::size_t>(c)] = offset(rng);
    color_noise.emplace_back(rng);
  }
  const int F = out.feature_channels();
  std::vector<SmoothNoise> feature_noise;
  for (int c = 0; c < F; ++c) feature_noise.emplace_back(rng);

  auto density = out.density();
  auto color = out.color();
  auto feature = out.feature();
  const auto [gx, gy, gz] = out.dims();
  for (int ix = 0; ix < gx; ++ix)
    for (int iy = 0; iy < gy; ++iy)
      for (int iz = 0; iz < gz; ++iz) {
        const Eigen::Vector3d p = out.voxel_position(ix, iy, iz);
        const std::size_t v = out.index(ix, iy, iz);
        density[v] = static_cast<float>(
            density[v] * std::max(0.0, 1.0 + 0.5 * strength * density_noise(p)));
        for (int c = 0; c < 3; ++c) {
          const double shift = strength * (color_offset[static_cast<std::size_t>(c)] +
                                           0.5 * color_noise[static_cast<std::size_t>(c)](p));
          color[3 * v + c] = static_cast<float>(std::clamp(color[3 * v + c] + shift, 0.0, 1.0));
        }
        if (follow == FeatureMode::part_id)
          for (int c = 0; c < F; ++c)
            feature[v * F + c] += static_cast<float>(
                0.125 * strength * std::clamp(feature_noise[static_cast<std::size_t>(c)](p), -1.0, 1.0));
      }
  if (follow != FeatureMode::part_id) fill_features_from_color(out, follow);
  return out;
}

void PoseDistSpec::validate() const {
  if (components.empty()) throw ValidationError("pose distribution needs a component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0) || !(c.std >= 0.0))
      throw ValidationError("mixture weights and std must be non-negative");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("mixture weights must sum to 1");
  if (!(phi_lo <= phi_hi && phi_lo >= 0.0 && phi_hi <= kPi))
    throw ValidationError("phi range must be ordered within [0, pi]");
  if (!(gamma_std >= 0.0)) throw ValidationError("gamma_std must be non-negative");
  if (!(r_lo > 0.0 && r_lo <= r_hi)) throw ValidationError("r range must be positive and ordered");
}

std::vector<AzimuthComponent> parse_azimuth_mixture(std::string_view text) {
  std::vector<AzimuthComponent> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    double mean = 0.0, sd = 0.0, weight = 0.0;
    char tail = 0;
    if (std::sscanf(item.c_str(), "%lf:%lf:%lf%c", &mean, &sd, &weight, &tail) != 3)
      throw ValidationError("bad mixture component '" + item + "', expected mean:std:weight");
    out.push_back({deg_to_rad(mean), deg_to_rad(sd), weight});
  }
  if (out.empty()) throw ValidationError("empty azimuth mixture");
  double total = 0.0;
  for (const auto& c : out) {
    if (!(c.weight >= 0.0) || !(c.std >= 0.0))
      throw ValidationError("mixture weights and std must be non-negative");
    total += c.weight;
  }
  if (!(total > 0.0)) throw ValidationError("mixture weights sum to zero");
  for (auto& c : out) c.weight /= total;
  return out;
}

CameraPose sample_gt_pose(const PoseDistSpec& dist, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double u = unit(rng);
  std::size_t comp = dist.components.size() - 1;
  double cdf = 0.0;
  for (std::size_t i = 0; i < dist.components.size(); ++i) {
    cdf += dist.components[i].weight;
    if (u < cdf) {
      comp = i;
      break;
    }
  }
  const auto& c = dist.components[comp];
  CameraPose pose;
  pose.theta = wrap_two_pi(c.mean + c.std * normal(rng));
  pose.phi = dist.phi_lo + (dist.phi_hi - dist.phi_lo) * unit(rng);
  pose.gamma = wrap_pi(dist.gamma_std * normal(rng));
  pose.r = dist.r_lo + (dist.r_hi - dist.r_lo) * unit(rng);
  return pose;
}

LabeledDataset make_dataset(const FeatureField& tmpl, const PoseDistSpec& dist, std::size_t n,
                            std::uint64_t seed, const std::filesystem::path& out_dir,
                            const DatasetOptions& options) {
  dist.validate();
  options.intrinsics.validate();
  options.render_config.validate();
  std::filesystem::create_directories(out_dir);

  LabeledDataset ds;
  ds.manifest = out_dir / "manifest.csv";
  ds.entries.resize(n);
  std::vector<FeatureMap> maps(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    const std::uint64_t entry_seed = seed + i;
    std::mt19937_64 rng(entry_seed);
    DatasetEntry& e = ds.entries[i];
    e.seed = entry_seed;
    e.pose = sample_gt_pose(dist, rng);
    const FeatureField instance =
        make_instance(tmpl, entry_seed, options.instance_strength, options.follow);
    RenderOutput out = render(instance, e.pose, options.intrinsics, options.render_config);
    e.file = out_dir / (entry_stem(i) + ".tfm");
    e.depth_file = out_dir / (entry_stem(i) + ".depth.tfm");
    write_feature_map(e.file, out.feature_map);
    write_feature_map(e.depth_file, out.depth_map);
    maps[i] = std::move(out.feature_map);
  });

  if (n > 0) {
    ds.feature_min = std::numeric_limits<float>::infinity();
    ds.feature_max = -std::numeric_limits<float>::infinity();
    for (const auto& m : maps)
      for (float v : m.data()) {
        ds.feature_min = std::min(ds.feature_min, v);
        ds.feature_max = std::max(ds.feature_max, v);
      }
  }
  if (options.write_png)
    parallel_for(n, options.threads, [&](std::size_t i) {
      write_feature_png(out_dir / (entry_stem(i) + ".png"), maps[i], ds.feature_min,
                        ds.feature_max);
    });

  std::ofstream out(ds.manifest);
  if (!out) throw std::runtime_error("cannot open " + ds.manifest.string() + " for writing");
  out << "# feature_range=" << format_double(ds.feature_min) << ','
      << format_double(ds.feature_max) << '\n';
  out << "file,theta,phi,gamma,r,seed\n";
  for (const auto& e : ds.entries)
    out << e.file.filename().string() << ',' << format_double(e.pose.theta) << ','
        << format_double(e.pose.phi) << ',' << format_double(e.pose.gamma) << ','
        << format_double(e.pose.r) << ',' << e.seed << '\n';
  if (!out) throw std::runtime_error("failed to write " + ds.manifest.string());
  return ds;
}

LabeledDataset read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open " + manifest.string());
  LabeledDataset ds;
  ds.manifest = manifest;
  const auto dir = manifest.parent_path();
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      double lo = 0.0, hi = 0.0;
      if (std::sscanf(line.c_str(), "# feature_range=%lf,%lf", &lo, &hi) == 2) {
        ds.feature_min = static_cast<float>(lo);
        ds.feature_max = static_cast<float>(hi);
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("file,", 0) != 0)
        throw FormatError(manifest.string() + ": missing header line");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string file, field;
    std::vector<std::string> fields;
    std::getline(ss, file, ',');
    while (std::getline(ss, field, ',')) fields.push_back(field);
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (file.empty() || fields.size() < 4)
      throw FormatError(where + ": expected file,theta,phi,gamma,r");
    double values[4];
    for (int i = 0; i < 4; ++i) {
      try {
        values[i] = std::stod(fields[static_cast<std::size_t>(i)]);
      } catch (const std::exception&) {
        throw FormatError(where + ": bad number '" + fields[static_cast<std::size_t>(i)] + "'");
      }
    }
    DatasetEntry e;
    e.file = dir / file;
    auto depth = std::filesystem::path(file).replace_extension(".depth.tfm");
    e.depth_file = dir / depth;
    e.pose = CameraPose{values[0], values[1], values[2], values[3]};
    if (fields.size() > 4) {
      try {
        e.seed = std::stoull(fields[4]);
      } catch (const std::exception&) {
        throw FormatError(where + ": bad seed '" + fields[4] + "'");
      }
    }
    ds.entries.push_back(e);
  }
  if (!header_seen) throw FormatError(manifest.string() + ": missing header line");
  return ds;
}

}  // namespace teff
