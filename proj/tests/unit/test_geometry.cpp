#include <Eigen/Geometry>
#include <cmath>
#include <random>

#include "doctest.h"
#include "teff/errors.hpp"
#include "teff/geometry.hpp"

using namespace teff;

namespace {

// Spherical basis: camera right is e_theta, camera up is -e_phi and the
// camera looks along -e_r. Roll is a rotation about the camera z axis.
Eigen::Matrix3d spherical_frame(double theta, double phi, double gamma) {
  const Eigen::Vector3d e_r(std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta),
                            std::cos(phi));
  const Eigen::Vector3d e_theta(-std::sin(theta), std::cos(theta), 0.0);
  const Eigen::Vector3d e_phi(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta),
                              -std::sin(phi));
  Eigen::Matrix3d base;
  base.col(0) = e_theta;
  base.col(1) = -e_phi;
  base.col(2) = e_r;
  return base * Eigen::AngleAxisd(gamma, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

}  // namespace

TEST_CASE("extrinsics match the spherical frame") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> th(0.0, kTwoPi), ph(0.1, kPi - 0.1), ga(-kPi, kPi),
      rr(0.5, 8.0);
  for (int i = 0; i < 200; ++i) {
    const CameraPose pose{th(rng), ph(rng), ga(rng), rr(rng)};
    const Eigen::Matrix4d m = pose_to_extrinsics(pose);
    const Eigen::Matrix3d expected = spherical_frame(pose.theta, pose.phi, pose.gamma);
    CHECK((m.block<3, 3>(0, 0) - expected).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::Vector3d pos = m.block<3, 1>(0, 3);
    CHECK(std::abs(pos.norm() - pose.r) < 1e-12);
    CHECK((pos.normalized() - expected.col(2)).norm() < 1e-12);
    CHECK(std::abs(m.block<3, 3>(0, 0).determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("extrinsics stay finite at the poles") {
  for (double phi : {0.0, kPi}) {
    const Eigen::Matrix4d m = pose_to_extrinsics(CameraPose{0.3, phi, 0.0, 2.0});
    CHECK(m.allFinite());
    CHECK(std::abs(m.block<3, 3>(0, 0).determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("invalid poses are rejected") {
  CHECK_THROWS_AS(pose_to_extrinsics(CameraPose{0, 1, 0, 0.0}), ValidationError);
  CHECK_THROWS_AS(pose_to_extrinsics(CameraPose{NAN, 1, 0, 1.0}), ValidationError);
}

TEST_CASE("angle wrapping") {
  CHECK(wrap_two_pi(-0.5) == doctest::Approx(kTwoPi - 0.5));
  CHECK(wrap_two_pi(kTwoPi) == 0.0);
  CHECK(wrap_two_pi(-1e-18) < kTwoPi);
  CHECK(wrap_pi(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_pi(3 * kPi + 0.25) == doctest::Approx(-kPi + 0.25));
}

TEST_CASE("slab intersection") {
  Aabb box;
  double t0 = 0, t1 = 0;
  SUBCASE("axis-aligned hit") {
    REQUIRE(intersect_aabb({-3, 0, 0}, {1, 0, 0}, box, t0, t1));
    CHECK(t0 == doctest::Approx(2.0));
    CHECK(t1 == doctest::Approx(4.0));
  }
  SUBCASE("diagonal hit through a corner region") {
    const Eigen::Vector3d d = Eigen::Vector3d(1, 1, 1).normalized();
    REQUIRE(intersect_aabb({-2, -2, -2}, d, box, t0, t1));
    CHECK(t0 == doctest::Approx(std::sqrt(3.0)));
    CHECK(t1 == doctest::Approx(3 * std::sqrt(3.0)));
  }
  SUBCASE("miss") { CHECK_FALSE(intersect_aabb({-3, 2, 0}, {1, 0, 0}, box, t0, t1)); }
  SUBCASE("parallel outside the slab") {
    CHECK_FALSE(intersect_aabb({0, 1.5, -3}, {0, 0, 1}, box, t0, t1));
  }
  SUBCASE("origin inside clamps to zero") {
    REQUIRE(intersect_aabb({0, 0, 0}, {0, 0, -1}, box, t0, t1));
    CHECK(t0 == 0.0);
    CHECK(t1 == doctest::Approx(1.0));
  }
}

TEST_CASE("central ray points at the origin") {
  Intrinsics intr;
  intr.width = intr.height = 2;  // pixel centers straddle the axis
  const CameraPose pose{1.0, 1.2, 0.4, 4.0};
  const RayGrid rays = generate_rays(pose_to_extrinsics(pose), intr, Aabb{});
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& r : rays.rays) mean += r.direction;
  const Eigen::Vector3d to_origin = -pose_to_extrinsics(pose).block<3, 1>(0, 3).normalized();
  CHECK((mean.normalized() - to_origin).norm() < 1e-12);
  for (const auto& r : rays.rays) CHECK_FALSE(r.empty());
}

TEST_CASE("pose grid indexing") {
  PoseGrid grid;
  CHECK(grid.size() == 108);
  CHECK(grid.theta_is_circular());
  CHECK(grid.theta_center(0) == 0.0);
  CHECK(grid.theta_center(9) == doctest::Approx(kPi / 2));
  CHECK(grid.phi_center(1) == doctest::Approx(kPi / 2));
  const auto poses = enumerate_grid(grid);
  for (std::size_t k = 0; k < poses.size(); ++k) {
    CHECK(grid.index_of(poses[k]) == k);
    CHECK(grid.index(grid.theta_bin_of_index(k), grid.phi_bin_of_index(k)) == k);
  }
  // Just below 360 degrees wraps onto bin 0.
  CHECK(grid.theta_bin_of(kTwoPi - 0.01) == 0);

  PoseGrid partial;
  partial.theta_lo = 0.0;
  partial.theta_hi = kPi;
  partial.n_theta = 4;
  CHECK_FALSE(partial.theta_is_circular());
  CHECK(partial.theta_center(0) == doctest::Approx(kPi / 8));
  CHECK(partial.theta_bin_of(-1.0) == 0);
  CHECK(partial.theta_bin_of(4.0) == 3);

  PoseGrid bad;
  bad.n_phi = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
