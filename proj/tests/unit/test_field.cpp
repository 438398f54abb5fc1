#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "teff/errors.hpp"
#include "teff/field.hpp"
#include "teff/synth.hpp"

using namespace teff;

namespace {

FeatureField uniform_field(float sigma, int channels = 2) {
  FeatureField f({5, 5, 5}, Aabb{}, channels);
  for (auto& s : f.density()) s = sigma;
  for (auto& c : f.color()) c = 0.5f;
  for (auto& v : f.feature()) v = 0.25f;
  return f;
}

}  // namespace

TEST_CASE("step opacity") {
  CHECK(std::abs(step_alpha(std::log(2.0), 1.0) - 0.5) < 1e-12);
  CHECK(step_alpha(0.0, 0.3) == 0.0);
  CHECK(step_alpha(1e9, 1.0) == 1.0);
}

TEST_CASE("uniform medium matches Beer-Lambert") {
  const float sigma = 1.3f;
  const FeatureField f = uniform_field(sigma);
  Ray ray;
  ray.origin = {-3, 0.1, 0.2};
  ray.direction = {1, 0, 0};
  REQUIRE(intersect_aabb(ray.origin, ray.direction, f.bbox(), ray.t_near, ray.t_far));
  const auto w = ray_weights(f, ray, 64);
  double total = 0.0;
  for (double x : w) total += x;
  CHECK(total == doctest::Approx(1.0 - std::exp(-sigma * 2.0)).epsilon(1e-9));
  // Weights decay geometrically in a homogeneous medium.
  CHECK(w[1] / w[0] == doctest::Approx(std::exp(-sigma * 2.0 / 64)).epsilon(1e-9));
}

TEST_CASE("trilinear lookup") {
  FeatureField f({2, 2, 2}, Aabb{}, 1);
  for (std::size_t i = 0; i < f.voxel_count(); ++i) f.density()[i] = static_cast<float>(i);
  CHECK(sample_field(f, {-1, -1, -1}).density == 0.0f);
  CHECK(sample_field(f, {1, 1, 1}).density == 7.0f);
  CHECK(sample_field(f, {0, 0, 0}).density == doctest::Approx(3.5));
  CHECK(sample_field(f, {0, 0, 1.5}).density == 0.0f);
}

TEST_CASE("feature equals premultiplied color when channels are duplicated") {
  TemplateSpec spec;
  spec.dims = {24, 24, 24};
  spec.feature_mode = FeatureMode::color_copy;
  const FeatureField f = make_template(spec);
  Intrinsics intr;
  intr.width = intr.height = 32;
  const RenderOutput out = render(f, CameraPose{0.7, 1.3, 0.2, 4.0}, intr, RenderConfig{});
  REQUIRE(out.feature_map.same_shape(out.premultiplied_color));
  float max_diff = 0.0f;
  for (std::size_t i = 0; i < out.feature_map.size(); ++i)
    max_diff = std::max(max_diff,
                        std::abs(out.feature_map.data()[i] - out.premultiplied_color.data()[i]));
  CHECK(max_diff < 1e-6f);
  float alpha_max = 0.0f;
  for (float a : out.alpha_map.data()) alpha_max = std::max(alpha_max, a);
  CHECK(alpha_max > 0.9f);
}

TEST_CASE("white background composites through the alpha") {
  const FeatureField f = uniform_field(0.4f);
  Intrinsics intr;
  intr.width = intr.height = 8;
  RenderConfig cfg;
  cfg.white_background = true;
  const RenderOutput out = render(f, CameraPose{0, kPi / 2, 0, 3.0}, intr, cfg);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const float a = out.alpha_map.at(r, c, 0);
      CHECK(out.color_map.at(r, c, 0) ==
            doctest::Approx(out.premultiplied_color.at(r, c, 0) + (1.0f - a)).epsilon(1e-6));
    }
}

TEST_CASE("render is independent of the thread count") {
  const FeatureField f = make_template(TemplateSpec{.dims = {20, 20, 20}});
  Intrinsics intr;
  intr.width = intr.height = 24;
  const CameraPose pose{2.0, 1.4, 0.0, 4.0};
  const RenderOutput a = render(f, pose, intr, RenderConfig{}, 1);
  const RenderOutput b = render(f, pose, intr, RenderConfig{}, 4);
  CHECK(a.feature_map == b.feature_map);
  CHECK(a.depth_map == b.depth_map);
}

TEST_CASE("TFF1 round trip and corruption") {
  FeatureField f = uniform_field(0.7f, 3);
  f.feature()[5] = -2.5f;
  std::stringstream ss;
  write_field(ss, f);
  const std::string bytes = ss.str();
  std::stringstream in(bytes);
  CHECK(read_field(in) == f);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_field(truncated), FormatError);
  std::stringstream bad_magic("XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(read_field(bad_magic), FormatError);
}

TEST_CASE("field validation") {
  FeatureField f = uniform_field(1.0f);
  f.density()[3] = -1.0f;
  CHECK_THROWS_AS(f.validate(), ValidationError);
  f.density()[3] = NAN;
  CHECK_THROWS_AS(f.validate(), ValidationError);
  FeatureField g = uniform_field(1.0f);
  g.color()[0] = 1.5f;
  CHECK_THROWS_AS(g.validate(), ValidationError);
  CHECK_THROWS_AS(FeatureField({1, 4, 4}, Aabb{}, 1), ValidationError);
}
