#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "poselift/errors.hpp"

namespace poselift::skeleton {

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
};

/// Kinematic tree rooted at the pelvis: parents[root] == root, all other
/// bone lengths strictly positive (millimetres).
struct SkeletonModel {
  std::size_t joint_count = 0;
  std::size_t root = 0;
  std::vector<std::size_t> parents;
  std::vector<double> bone_lengths_mm;
  std::vector<std::string> joint_names;

  void validate() const;  // throws InvalidConfig on a broken tree
  std::size_t bone_count() const { return joint_count - 1; }
  /// Non-root joints in ascending index order (row order of bone arrays).
  std::vector<std::size_t> non_root_joints() const;
};

/// Joint positions in millimetres, camera reference frame.
struct Pose3D {
  std::vector<Vec3> joints;
  std::size_t root_index = 0;
};

/// Joint positions in heatmap pixels.
struct Pose2D {
  std::vector<Vec2> joints;
};

/// Weak-perspective camera c = (alpha_x, alpha_y, c_x, c_y): focal scale in
/// pixels per millimetre plus the principal coordinate in pixels.
struct CameraParams {
  double alpha_x = 1, alpha_y = 1, c_x = 0, c_y = 0;
};

/// Full-image pinhole intrinsics used for perspective correction of crops.
struct PinholeIntrinsics {
  double focal_x = 1, focal_y = 1, center_x = 0, center_y = 0;
};

/// The canonical 14-joint desk-scale skeleton. Pelvis root, torso chain,
/// arms to the wrists, legs to the knees; bone lengths total ~3.6 m.
/// Rest directions lean out of the image plane so that depth is
/// statistically recoverable from 2D evidence.
SkeletonModel default_skeleton();
const std::vector<Vec3>& default_rest_directions();

/// Composes joint positions from per-bone unit directions; root at origin.
/// Directions for non-root joints must be unit within 1e-9.
Pose3D forward_kinematics(const SkeletonModel& skel, const std::vector<Vec3>& bone_directions);

/// Subtracts the root from every joint.
Pose3D root_center(const Pose3D& p);

/// joints[j] - joints[parents[j]] for every non-root joint, ascending order.
std::vector<Vec3> bone_vectors(const Pose3D& p, const SkeletonModel& skel);

std::vector<double> bone_lengths(const Pose3D& p, const SkeletonModel& skel);
std::vector<double> bone_lengths(const Pose2D& p, const SkeletonModel& skel);

/// (alpha_x x + c_x, alpha_y y + c_y) per joint; depth is dropped.
Pose2D project_weak_perspective(const Pose3D& p, const CameraParams& c);

/// Per-axis least-squares recovery of the weak-perspective parameters from
/// a 3D/2D correspondence. Throws DegenerateFit when an axis of the 3D
/// pose has (numerically) zero variance.
CameraParams fit_weak_perspective(const Pose3D& p3, const Pose2D& p2);

/// Rotates a root-relative pose so the optical axis points along the ray
/// through the crop center, compensating the virtual rotation a crop
/// introduces. Rigid, so all pairwise distances are preserved.
Pose3D perspective_correction(const Pose3D& p, const Vec2& crop_center_px,
                              const PinholeIntrinsics& intr);

/// Rodrigues rotation of v by angle about a unit axis.
Vec3 rotate_axis_angle(const Vec3& v, const Vec3& axis, double angle);

}  // namespace poselift::skeleton
