#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "teff/errors.hpp"
#include "teff/field.hpp"
#include "teff/metrics.hpp"
#include "teff/synth.hpp"

using namespace teff;
namespace fs = std::filesystem;

namespace {

FeatureMap view(const FeatureField& f, double theta) {
  Intrinsics intr;
  intr.width = intr.height = 32;
  return render(f, CameraPose{theta, 1.4, 0.0, 4.0}, intr, RenderConfig{}).feature_map;
}

}  // namespace

TEST_CASE("symmetric template looks the same from opposite sides") {
  TemplateSpec spec;
  spec.dims = {24, 24, 24};
  spec.asymmetry = 0.0;
  const FeatureField sym = make_template(spec);
  CHECK(mean_squared_error(view(sym, 0.4), view(sym, 0.4 + kPi)) < 1e-8);

  spec.asymmetry = 1.0;
  const FeatureField asym = make_template(spec);
  CHECK(mean_squared_error(view(asym, 0.4), view(asym, 0.4 + kPi)) > 1e-3);
}

TEST_CASE("templates are seeded") {
  TemplateSpec spec;
  spec.dims = {16, 16, 16};
  spec.n_parts = 6;
  CHECK(make_template(spec) == make_template(spec));
  TemplateSpec other = spec;
  other.seed = 2;
  CHECK_FALSE(make_template(spec) == make_template(other));
}

TEST_CASE("instance strength") {
  TemplateSpec spec;
  spec.dims = {16, 16, 16};
  const FeatureField t = make_template(spec);
  CHECK(make_instance(t, 7, 0.0) == t);
  const FeatureField weak = make_instance(t, 7, 0.1);
  const FeatureField strong = make_instance(t, 7, 0.8);
  auto color_dev = [&](const FeatureField& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.color().size(); ++i)
      s += std::abs(f.color()[i] - t.color()[i]);
    return s;
  };
  CHECK(color_dev(weak) > 0.0);
  CHECK(color_dev(strong) > 3.0 * color_dev(weak));
  strong.validate();

  // Part-id features move far less than colors.
  double feat = 0.0, col = 0.0;
  for (std::size_t i = 0; i < t.feature().size(); ++i)
    feat = std::max(feat, static_cast<double>(std::abs(strong.feature()[i] - t.feature()[i])));
  for (std::size_t i = 0; i < t.color().size(); ++i)
    col = std::max(col, static_cast<double>(std::abs(strong.color()[i] - t.color()[i])));
  CHECK(feat <= 0.125 * 0.8 + 1e-6);
  CHECK(col > feat);

  // Following the colors makes the features equal to them.
  TemplateSpec cspec = spec;
  cspec.feature_mode = FeatureMode::color_copy;
  const FeatureField ct = make_template(cspec);
  const FeatureField ci = make_instance(ct, 3, 0.5, FeatureMode::color_copy);
  for (std::size_t i = 0; i < ci.color().size(); ++i) CHECK(ci.feature()[i] == ci.color()[i]);
}

TEST_CASE("feature mode names") {
  for (auto m : {FeatureMode::part_id, FeatureMode::color_copy, FeatureMode::gray_copy})
    CHECK(parse_feature_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_feature_mode("rgb"), ValidationError);
}

TEST_CASE("azimuth mixture") {
  const auto comps = parse_azimuth_mixture("90:15:3,270:15:1");
  REQUIRE(comps.size() == 2);
  CHECK(comps[0].weight == doctest::Approx(0.75));
  CHECK(comps[1].mean == doctest::Approx(deg_to_rad(270)));
  CHECK_THROWS_AS(parse_azimuth_mixture("90:15"), ValidationError);
  CHECK_THROWS_AS(parse_azimuth_mixture("90:15:-1"), ValidationError);

  PoseDistSpec dist;
  dist.components = comps;
  std::mt19937_64 rng(4);
  int near_first = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const CameraPose p = sample_gt_pose(dist, rng);
    CHECK(p.phi >= dist.phi_lo);
    CHECK(p.phi <= dist.phi_hi);
    if (std::abs(wrap_pi(p.theta - deg_to_rad(90))) < kPi / 2) ++near_first;
  }
  CHECK(near_first / static_cast<double>(n) == doctest::Approx(0.75).epsilon(0.03));
}

TEST_CASE("dataset manifest round trip") {
  const fs::path dir = fs::temp_directory_path() / "teff_unit_dataset";
  fs::remove_all(dir);
  TemplateSpec spec;
  spec.dims = {16, 16, 16};
  DatasetOptions opts;
  opts.intrinsics.width = opts.intrinsics.height = 24;
  opts.instance_strength = 0.3;
  const LabeledDataset ds = make_dataset(make_template(spec), PoseDistSpec{}, 3, 40, dir, opts);
  const LabeledDataset back = read_manifest(ds.manifest);
  REQUIRE(back.entries.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.entries[i].pose.theta == ds.entries[i].pose.theta);
    CHECK(back.entries[i].seed == 40 + i);
    CHECK(fs::exists(back.entries[i].file));
    CHECK(fs::exists(back.entries[i].depth_file));
  }
  CHECK(back.feature_min == ds.feature_min);
  CHECK(back.feature_max == ds.feature_max);
  fs::remove_all(dir);
}

TEST_CASE("feature perturbation stays below half the color perturbation") {
  TemplateSpec spec;
  spec.dims = {20, 20, 20};
  const FeatureField t = make_template(spec);
  const FeatureField inst = make_instance(t, 12, 0.3);
  auto rms = [](std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / a.size());
  };
  const double feat = rms(inst.feature(), t.feature());
  const double col = rms(inst.color(), t.color());
  CHECK(feat > 0.0);
  CHECK(feat < 0.5 * col);
  CHECK_FALSE(make_instance(t, 13, 0.3) == inst);
  CHECK(make_instance(t, 12, 0.3) == inst);
}

TEST_CASE("sampled azimuths follow the analytic mixture") {
  PoseDistSpec dist;
  dist.components = parse_azimuth_mixture("90:15:0.5,270:15:0.5");
  std::mt19937_64 rng(21);
  std::vector<double> thetas;
  for (int i = 0; i < 10000; ++i) thetas.push_back(sample_gt_pose(dist, rng).theta);
  const PoseHistogram h = pose_histogram(thetas, PoseAxis::theta, 24, 0.0, kTwoPi);
  const auto a = wrapped_gaussian_bins(deg_to_rad(90), deg_to_rad(15), 24);
  const auto b = wrapped_gaussian_bins(deg_to_rad(270), deg_to_rad(15), 24);
  std::vector<double> analytic(24);
  for (int i = 0; i < 24; ++i) analytic[i] = 0.5 * (a[i] + b[i]);
  CHECK(kl_divergence(h.probs, analytic) < 0.01);
  double lower = 0.0;
  for (int i = 0; i < 12; ++i) lower += h.probs[i];
  CHECK(lower == doctest::Approx(0.5).epsilon(0.04));

  PoseDistSpec point;
  point.components = {AzimuthComponent{0.0, 0.0, 1.0}};
  for (int i = 0; i < 10; ++i) CHECK(sample_gt_pose(point, rng).theta == 0.0);
}

TEST_CASE("empty dataset") {
  const fs::path dir = fs::temp_directory_path() / "teff_unit_empty";
  fs::remove_all(dir);
  TemplateSpec spec;
  spec.dims = {8, 8, 8};
  const LabeledDataset ds = make_dataset(make_template(spec), PoseDistSpec{}, 0, 1, dir);
  CHECK(ds.entries.empty());
  CHECK(read_manifest(ds.manifest).entries.empty());
  fs::remove_all(dir);
}
