#include "teff/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "teff/errors.hpp"

namespace teff {

double wrap_two_pi(double angle) {
  double wrapped = std::fmod(angle, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  // fmod of a tiny negative number can round up to exactly 2pi.
  if (wrapped >= kTwoPi) wrapped = 0.0;
  return wrapped;
}

double wrap_pi(double angle) {
  double wrapped = wrap_two_pi(angle + kPi) - kPi;
  if (wrapped >= kPi) wrapped -= kTwoPi;
  return wrapped;
}

CameraPose CameraPose::normalized() const {
  if (!std::isfinite(theta) || !std::isfinite(phi) || !std::isfinite(gamma) ||
      !std::isfinite(r))
    throw ValidationError("camera pose has a non-finite component");
  if (!(r > 0.0)) throw ValidationError("camera radius must be positive, got " + std::to_string(r));
  return CameraPose{wrap_two_pi(theta), std::clamp(phi, 0.0, kPi), wrap_pi(gamma), r};
}

void Intrinsics::validate() const {
  if (!(fov_y > 0.0 && fov_y < kPi)) throw ValidationError("fov_y must lie in (0, pi)");
  if (width < 1 || height < 1) throw ValidationError("image dimensions must be >= 1");
}

double Intrinsics::focal_pixels() const { return 0.5 * height / std::tan(0.5 * fov_y); }

void PoseGrid::validate() const {
  if (n_theta < 1 || n_phi < 1) throw ValidationError("pose grid needs n_theta, n_phi >= 1");
  if (!(theta_hi > theta_lo)) throw ValidationError("theta range is empty");
  if (!(phi_hi >= phi_lo)) throw ValidationError("phi range is inverted");
  if (phi_lo < 0.0 || phi_hi > kPi) throw ValidationError("phi range must lie within [0, pi]");
  if (!(r_fixed > 0.0)) throw ValidationError("r_fixed must be positive");
}

bool PoseGrid::theta_is_circular() const {
  return std::abs((theta_hi - theta_lo) - kTwoPi) < 1e-9;
}

double PoseGrid::theta_center(int i) const {
  const double offset = theta_is_circular() ? 0.0 : 0.5;
  return theta_lo + (i + offset) * theta_bin_width();
}

double PoseGrid::phi_center(int j) const { return phi_lo + (j + 0.5) * phi_bin_width(); }

int PoseGrid::theta_bin_of(double theta) const {
  const double width = theta_bin_width();
  if (theta_is_circular()) {
    const double rel = wrap_two_pi(theta - theta_lo);
    const int bin = static_cast<int>(std::floor(rel / width + 0.5));
    return bin % n_theta;
  }
  const int bin = static_cast<int>(std::floor((theta - theta_lo) / width));
  return std::clamp(bin, 0, n_theta - 1);
}

int PoseGrid::phi_bin_of(double phi) const {
  const double width = phi_bin_width();
  if (!(width > 0.0)) return 0;
  const int bin = static_cast<int>(std::floor((phi - phi_lo) / width));
  return std::clamp(bin, 0, n_phi - 1);
}

std::size_t PoseGrid::index_of(const CameraPose& pose) const {
  return index(theta_bin_of(pose.theta), phi_bin_of(pose.phi));
}

CameraPose PoseGrid::pose_at(std::size_t k) const {
  return CameraPose{wrap_two_pi(theta_center(theta_bin_of_index(k))),
                    phi_center(phi_bin_of_index(k)), gamma_fixed, r_fixed};
}

std::vector<CameraPose> enumerate_grid(const PoseGrid& grid) {
  grid.validate();
  std::vector<CameraPose> poses;
  poses.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) poses.push_back(grid.pose_at(k));
  return poses;
}

Eigen::Matrix4d pose_to_extrinsics(const CameraPose& raw) {
  const CameraPose pose = raw.normalized();
  const double sp = std::sin(pose.phi);
  const Eigen::Vector3d position =
      pose.r * Eigen::Vector3d(sp * std::cos(pose.theta), sp * std::sin(pose.theta),
                               std::cos(pose.phi));

  const Eigen::Vector3d forward = (-position).normalized();
  const Eigen::Vector3d world_up =
      std::abs(sp) < 1e-6 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitZ();
  Eigen::Vector3d right = forward.cross(world_up).normalized();
  Eigen::Vector3d up = right.cross(forward);

  // Roll about the optical axis: turning the camera counter-clockwise by
  // gamma turns the imaged content clockwise on screen.
  const double cg = std::cos(pose.gamma);
  const double sg = std::sin(pose.gamma);
  const Eigen::Vector3d rolled_right = cg * right + sg * up;
  const Eigen::Vector3d rolled_up = -sg * right + cg * up;

  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 1>(0, 0) = rolled_right;
  m.block<3, 1>(0, 1) = rolled_up;
  m.block<3, 1>(0, 2) = -forward;
  m.block<3, 1>(0, 3) = position;
  return m;
}

bool intersect_aabb(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                    const Aabb& box, double& t_near, double& t_far) {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double d = direction[axis];
    if (std::abs(d) < 1e-15) {
      if (origin[axis] < box.min[axis] || origin[axis] > box.max[axis]) return false;
      continue;
    }
    double t0 = (box.min[axis] - origin[axis]) / d;
    double t1 = (box.max[axis] - origin[axis]) / d;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo > hi) return false;
  }
  t_near = lo;
  t_far = hi;
  return lo < hi;
}

RayGrid generate_rays(const Eigen::Matrix4d& camera_to_world, const Intrinsics& intr,
                      const Aabb& bounds) {
  intr.validate();
  const double focal = intr.focal_pixels();
  const Eigen::Matrix3d rotation = camera_to_world.block<3, 3>(0, 0);
  const Eigen::Vector3d origin = camera_to_world.block<3, 1>(0, 3);

  RayGrid grid;
  grid.width = intr.width;
  grid.height = intr.height;
  grid.rays.resize(static_cast<std::size_t>(intr.width) * intr.height);
  for (int row = 0; row < intr.height; ++row) {
    for (int col = 0; col < intr.width; ++col) {
      const Eigen::Vector3d cam_dir((col + 0.5 - 0.5 * intr.width) / focal,
                                    -(row + 0.5 - 0.5 * intr.height) / focal, -1.0);
      Ray& ray = grid.rays[static_cast<std::size_t>(row) * intr.width + col];
      ray.origin = origin;
      ray.direction = (rotation * cam_dir).normalized();
      double t0 = 0.0, t1 = 0.0;
      if (intersect_aabb(origin, ray.direction, bounds, t0, t1)) {
        ray.t_near = t0;
        ray.t_far = t1;
      } else {
        ray.t_near = ray.t_far = 0.0;
      }
    }
  }
  return grid;
}

}  // namespace teff
