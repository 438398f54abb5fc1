#include <cmath>
#include <random>

#include "doctest.h"
#include "teff/errors.hpp"
#include "teff/field.hpp"
#include "teff/registration.hpp"
#include "teff/synth.hpp"

using namespace teff;

namespace {

// Sum of Gaussian blobs sampled with an offset (shift applied as b(p) = a(p - d)).
FeatureMap blobs(int n, double dx, double dy) {
  FeatureMap m(n, n, 1);
  const double centers[3][3] = {{20, 22, 5}, {40, 30, 3}, {28, 44, 4}};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double v = 0.0;
      for (const auto& b : centers) {
        const double x = c - dx - b[0], y = r - dy - b[1];
        v += std::exp(-(x * x + y * y) / (2 * b[2] * b[2]));
      }
      m.at(r, c, 0) = static_cast<float>(v);
    }
  return m;
}

FeatureMap rendered_template() {
  TemplateSpec spec;
  spec.dims = {32, 32, 32};
  Intrinsics intr;
  return render(make_template(spec), CameraPose{0.6, 1.45, 0.0, 4.0}, intr, RenderConfig{})
      .feature_map;
}

}  // namespace

TEST_CASE("phase correlation recovers integer and fractional shifts") {
  const FeatureMap a = blobs(64, 0, 0);
  for (auto [dx, dy] : {std::pair{3.0, -2.0}, std::pair{-7.0, 5.0}, std::pair{2.4, 1.7}}) {
    const Translation t = phase_correlate(a, blobs(64, dx, dy));
    CHECK(std::abs(t.dx - dx) < 0.25);
    CHECK(std::abs(t.dy - dy) < 0.25);
    CHECK(t.confidence > 1.0);
  }
  const Translation whole = phase_correlate(a, blobs(64, 4, -3), false);
  CHECK(whole.dx == 4.0);
  CHECK(whole.dy == -3.0);
}

TEST_CASE("phase correlation input checks") {
  CHECK_THROWS_AS(phase_correlate(FeatureMap(8, 8, 1), FeatureMap(8, 9, 1)), DimensionError);
  CHECK_THROWS_AS(phase_correlate(FeatureMap(8, 8, 2), FeatureMap(8, 8, 2)), DimensionError);
  CHECK_THROWS(phase_correlate(FeatureMap(8, 8, 1), blobs(8, 0, 0)));
}

TEST_CASE("Fourier-Mellin recovers a known similarity") {
  const FeatureMap tmpl = rendered_template();
  const RegistrationConfig cfg;
  for (auto [s, deg] : {std::pair{1.0, 0.0}, std::pair{1.2, 25.0}, std::pair{0.85, -40.0}}) {
    const FeatureMap target = warp(tmpl, Similarity2D{s, deg_to_rad(deg)});
    const auto hyp = estimate_scale_rotation(tmpl, target, cfg);
    CHECK(std::abs(hyp[0].scale - s) < 0.02);
    CHECK(std::abs(hyp[1].scale - s) < 0.02);
    // One of the two hypotheses carries the true rotation.
    const double e0 = std::abs(wrap_pi(hyp[0].rotation - deg_to_rad(deg)));
    const double e1 = std::abs(wrap_pi(hyp[1].rotation - deg_to_rad(deg)));
    CHECK(std::min(e0, e1) < deg_to_rad(1.5));
    CHECK(std::abs(std::abs(wrap_pi(hyp[1].rotation - hyp[0].rotation)) - kPi) < 1e-9);
    // The signature path agrees with the map path.
    const auto via_sig = estimate_scale_rotation(log_polar_signature(tmpl, cfg),
                                                 log_polar_signature(target, cfg), cfg);
    CHECK(via_sig[0].scale == doctest::Approx(hyp[0].scale));
    CHECK(via_sig[0].rotation == doctest::Approx(hyp[0].rotation));
  }
}

TEST_CASE("warp") {
  const FeatureMap tmpl = rendered_template();
  CHECK(warp(tmpl, Similarity2D{}) == tmpl);
  const Similarity2D sim{1.1, 0.3};
  const FeatureMap w = warp(tmpl, sim);
  CHECK(warped_mse(tmpl, sim, tmpl) == doctest::Approx(mean_squared_error(w, tmpl)).epsilon(1e-9));

  // A quarter turn of a square image is a pure index permutation.
  FeatureMap ramp(4, 4, 1);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ramp.at(r, c, 0) = static_cast<float>(r * 4 + c);
  const FeatureMap q = warp(ramp, Similarity2D{1.0, kPi / 2});
  // Positive rotation is clockwise on screen: the top-left corner moves to top-right.
  CHECK(q.at(0, 3, 0) == doctest::Approx(ramp.at(0, 0, 0)));
  CHECK(q.at(3, 3, 0) == doctest::Approx(ramp.at(0, 3, 0)));
}

TEST_CASE("brute-force search picks the generating grid point") {
  const FeatureMap tmpl = rendered_template();
  const auto scales = linspace(0.8, 1.25, 10);
  const auto rots = linspace(-0.5, 0.5, 11);
  const Similarity2D truth{scales[6], rots[2]};
  const Similarity2D found =
      brute_force_scale_rotation(tmpl, warp(tmpl, truth), scales, rots, 2);
  CHECK(found.scale == truth.scale);
  CHECK(found.rotation == truth.rotation);
}

TEST_CASE("linspace") {
  const auto v = linspace(-1.0, 1.0, 5);
  REQUIRE(v.size() == 5);
  CHECK(v.front() == -1.0);
  CHECK(v[2] == doctest::Approx(0.0));
  CHECK(v.back() == 1.0);
}
