#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "teff/errors.hpp"
#include "teff/estimator.hpp"
#include "teff/synth.hpp"

using namespace teff;

namespace {

const FeatureField& small_template() {
  static const FeatureField field = [] {
    TemplateSpec spec;
    spec.dims = {28, 28, 28};
    return make_template(spec);
  }();
  return field;
}

Intrinsics small_intrinsics() {
  Intrinsics intr;
  intr.width = intr.height = 40;
  return intr;
}

PoseBank small_bank() {
  PoseGrid grid;
  grid.n_theta = 12;
  grid.n_phi = 1;
  return build_pose_bank(small_template(), grid, small_intrinsics(), RenderConfig{}, 2);
}

}  // namespace

TEST_CASE("softmax over negated errors") {
  const PoseDistribution pdf = pose_pdf(std::vector<double>{0.0, 1.0, 2.0}, 1.0);
  // e^0, e^-1, e^-2 normalized.
  const double z = 1.0 + std::exp(-1.0) + std::exp(-2.0);
  CHECK(pdf.probs[0] == doctest::Approx(1.0 / z).epsilon(1e-12));
  CHECK(pdf.probs[0] == doctest::Approx(0.66524).epsilon(1e-5));
  CHECK(pdf.probs[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(pdf.probs[2] == doctest::Approx(0.09003).epsilon(1e-4));

  // Huge temperatures stay finite thanks to the max shift.
  const PoseDistribution sharp = pose_pdf(std::vector<double>{0.5, 0.5001}, 1e8);
  CHECK(sharp.probs[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(sharp.probs[1]));

  CHECK_THROWS_AS(pose_pdf(std::vector<double>{0.1}, 0.0), ValidationError);
  CHECK_THROWS_AS(pose_pdf(std::vector<double>{0.1, NAN}, 1.0), ValidationError);
  CHECK_THROWS_AS(pose_pdf(std::vector<double>{}, 1.0), ValidationError);
}

TEST_CASE("temperature schedule") {
  const TemperatureSchedule s;
  CHECK(tau_at(s, 0) == 1.0);
  CHECK(tau_at(s, 500) == doctest::Approx(50.5));
  CHECK(tau_at(s, 1000) == 100.0);
  CHECK(tau_at(s, 5000) == 100.0);
  CHECK_THROWS_AS(tau_at(s, -1), ValidationError);
  CHECK_THROWS_AS((TemperatureSchedule{0.0, 1.0, 10}.validate()), ValidationError);
}

TEST_CASE("inverse-CDF sampling edge cases") {
  PoseDistribution pdf;
  pdf.probs = {0.0, 1.0, 0.0};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) CHECK(sample_index(pdf, rng) == 1);
  pdf.probs = {0.0, 0.0, 1.0};
  for (int i = 0; i < 100; ++i) CHECK(sample_index(pdf, rng) == 2);
}

TEST_CASE("argmin ties go to the lowest index") {
  std::vector<MatchResult> m(4);
  for (std::size_t i = 0; i < m.size(); ++i) m[i].index = i;
  m[0].mse = 0.3;
  m[1].mse = 0.1;
  m[2].mse = 0.2;
  m[3].mse = 0.1;
  CHECK(argmin_mse(m) == 1);
}

TEST_CASE("roll sign agrees between renderer and warp") {
  const FeatureField& field = small_template();
  const Intrinsics intr = small_intrinsics();
  const CameraPose base{0.9, kPi / 2, 0.0, 4.0};
  const FeatureMap upright = render(field, base, intr, RenderConfig{}).feature_map;
  CameraPose rolled = base;
  rolled.gamma = deg_to_rad(30.0);
  const FeatureMap target = render(field, rolled, intr, RenderConfig{}).feature_map;
  const double same = warped_mse(upright, Similarity2D{1.0, rolled.gamma}, target);
  const double opposite = warped_mse(upright, Similarity2D{1.0, -rolled.gamma}, target);
  CHECK(same < 0.1 * opposite);
}

TEST_CASE("bank self-consistency and pose readout") {
  const PoseBank bank = small_bank();
  REQUIRE(bank.size() == 12);
  const RegistrationConfig cfg;
  for (std::size_t k : {0u, 5u, 11u}) {
    const Estimate est = estimate_map(bank.templates[k], bank, cfg);
    CHECK(est.match.index == k);
    CHECK(est.pose.theta == doctest::Approx(bank.poses[k].theta));
    CHECK(std::abs(est.pose.r - bank.grid.r_fixed) < 0.05);
    CHECK(std::abs(wrap_pi(est.pose.gamma)) < deg_to_rad(1.0));
  }

  // A closer, rolled camera reads back as a smaller radius and the roll.
  CameraPose pose = bank.poses[3];
  pose.r = 3.5;
  pose.gamma = deg_to_rad(-20.0);
  const FeatureMap q = render(small_template(), pose, bank.intrinsics, bank.render_config).feature_map;
  const Estimate est = estimate_map(q, bank, cfg);
  CHECK(est.match.index == 3);
  CHECK(std::abs(est.pose.r - 3.5) < 0.15);
  CHECK(std::abs(wrap_pi(est.pose.gamma - pose.gamma)) < deg_to_rad(3.0));

  // Cached signatures change nothing.
  PoseBank prepared = bank;
  prepared.prepare(cfg);
  REQUIRE(prepared.prepared_for(cfg));
  const auto a = score_bank(q, bank, cfg);
  const auto b = score_bank(q, prepared, cfg, 3);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].mse == b[k].mse);

  CHECK_THROWS_AS(score_bank(FeatureMap(8, 8, 3), bank, cfg), DimensionError);
}

TEST_CASE("sampled poses jitter around the drawn bin") {
  const PoseBank bank = small_bank();
  std::vector<MatchResult> matches(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) matches[k].index = k;
  PoseDistribution pdf;
  pdf.probs.assign(bank.size(), 0.0);
  pdf.probs[4] = 1.0;
  std::mt19937_64 rng(9);
  std::size_t drawn = 99;
  const CameraPose p = sample_pose(pdf, bank, matches, rng, &drawn);
  CHECK(drawn == 4);
  CHECK(std::abs(wrap_pi(p.theta - bank.poses[4].theta)) < bank.grid.theta_bin_width());
  pdf.probs.pop_back();
  CHECK_THROWS_AS(sample_pose(pdf, bank, matches, rng), DimensionError);
}

TEST_CASE("TPB1 round trip") {
  PoseBank bank = small_bank();
  std::stringstream ss;
  write_pose_bank(ss, bank);
  const std::string bytes = ss.str();
  std::stringstream in(bytes);
  const PoseBank back = read_pose_bank(in);
  CHECK(back.templates == bank.templates);
  CHECK(back.size() == bank.size());
  CHECK(back.poses[7].theta == bank.poses[7].theta);
  CHECK(back.grid.n_theta == 12);
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_pose_bank(truncated), FormatError);
}
