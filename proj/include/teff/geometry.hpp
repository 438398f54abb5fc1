#pragma once

// Spherical camera model, pose-grid discretization and pinhole ray generation.
//
// Conventions:
//   * theta is the azimuth about world +z, phi the polar angle from +z
//     (phi = pi/2 is the equator), gamma the roll about the optical axis.
//   * The camera sits at r * (sin(phi)cos(theta), sin(phi)sin(theta), cos(phi))
//     and looks at the origin. Camera frame is OpenGL-like: +x right, +y up,
//     looking down -z. World +z is the up reference (+x at the poles).
//   * Image rows grow downward. A positive gamma rotates the rendered image
//     content by +gamma in the same sense as registration::warp.

#include <Eigen/Core>
#include <cstddef>
#include <numbers>
#include <vector>

namespace teff {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle into [0, 2pi).
double wrap_two_pi(double angle);
/// Wraps an angle into [-pi, pi).
double wrap_pi(double angle);

struct CameraPose {
  double theta = 0.0;
  double phi = kPi / 2;
  double gamma = 0.0;
  double r = 1.0;

  /// Wrapped theta/gamma and clamped phi. Throws ValidationError if r <= 0
  /// or any component is not finite.
  CameraPose normalized() const;
};

struct Intrinsics {
  double fov_y = deg_to_rad(30.0);
  int width = 64;
  int height = 64;

  void validate() const;
  double focal_pixels() const;
};

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d max = Eigen::Vector3d::Constant(1.0);
};

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
  double t_near = 0.0;
  double t_far = 0.0;

  bool empty() const { return !(t_near < t_far); }
};

/// Row-major grid of rays, one per pixel.
struct RayGrid {
  int width = 0;
  int height = 0;
  std::vector<Ray> rays;

  const Ray& at(int row, int col) const {
    return rays[static_cast<std::size_t>(row) * width + col];
  }
};

struct PoseGrid {
  double theta_lo = 0.0;
  double theta_hi = kTwoPi;
  double phi_lo = deg_to_rad(85.0);
  double phi_hi = deg_to_rad(95.0);
  int n_theta = 36;
  int n_phi = 3;
  double gamma_fixed = 0.0;
  double r_fixed = 4.0;

  void validate() const;
  std::size_t size() const {
    return static_cast<std::size_t>(n_theta) * static_cast<std::size_t>(n_phi);
  }
  double theta_bin_width() const { return (theta_hi - theta_lo) / n_theta; }
  double phi_bin_width() const { return (phi_hi - phi_lo) / n_phi; }
  /// True when the azimuth range covers the whole circle. Such grids have no
  /// edge, so bin i is centered on theta_lo + i * width.
  bool theta_is_circular() const;

  double theta_center(int i) const;
  double phi_center(int j) const;

  /// Bank index for (theta bin, phi bin): phi-major, theta fastest.
  std::size_t index(int theta_bin, int phi_bin) const {
    return static_cast<std::size_t>(phi_bin) * n_theta + theta_bin;
  }
  int theta_bin_of_index(std::size_t k) const { return static_cast<int>(k % n_theta); }
  int phi_bin_of_index(std::size_t k) const { return static_cast<int>(k / n_theta); }

  /// Nearest theta bin to an arbitrary azimuth (wrapping on circular grids).
  int theta_bin_of(double theta) const;
  int phi_bin_of(double phi) const;
  /// Inverse of enumerate_grid: the index whose bin contains the pose.
  std::size_t index_of(const CameraPose& pose) const;

  CameraPose pose_at(std::size_t k) const;
};

/// Camera-to-world transform for a pose on the viewing sphere.
Eigen::Matrix4d pose_to_extrinsics(const CameraPose& pose);

/// Pinhole rays through pixel centers, clipped to `bounds`. Rays that miss
/// the box get an empty [t_near, t_far] interval.
RayGrid generate_rays(const Eigen::Matrix4d& camera_to_world, const Intrinsics& intr,
                      const Aabb& bounds);

/// Slab test. Returns false when the ray misses; otherwise the entry and exit
/// distances, with t_near clamped to 0.
bool intersect_aabb(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                    const Aabb& box, double& t_near, double& t_far);

/// All grid poses in bank order (see PoseGrid::index).
std::vector<CameraPose> enumerate_grid(const PoseGrid& grid);

}  // namespace teff
