#include "poselift/skeleton.hpp"

#include <cmath>

namespace poselift::skeleton {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0) throw NonUnitDirection("cannot normalize a zero vector");
  return {x / n, y / n, z / n};
}

void SkeletonModel::validate() const {
  if (joint_count == 0) throw InvalidConfig("skeleton has no joints");
  if (parents.size() != joint_count || bone_lengths_mm.size() != joint_count)
    throw InvalidConfig("skeleton table sizes disagree with joint_count");
  if (root >= joint_count || parents[root] != root)
    throw InvalidConfig("skeleton root must be its own parent");
  if (bone_lengths_mm[root] != 0.0)
    throw InvalidConfig("root bone length must be zero");
  for (std::size_t j = 0; j < joint_count; ++j) {
    if (j == root) continue;
    if (parents[j] >= joint_count)
      throw InvalidConfig("parent index out of range");
    if (bone_lengths_mm[j] <= 0.0)
      throw InvalidConfig("non-root bone lengths must be positive");
    // Walk to the root: bounded steps prove acyclicity and connectivity.
    std::size_t cur = j;
    for (std::size_t steps = 0; cur != root; ++steps) {
      if (steps > joint_count) throw InvalidConfig("parent relation has a cycle");
      cur = parents[cur];
    }
  }
}

std::vector<std::size_t> SkeletonModel::non_root_joints() const {
  std::vector<std::size_t> out;
  out.reserve(joint_count - 1);
  for (std::size_t j = 0; j < joint_count; ++j)
    if (j != root) out.push_back(j);
  return out;
}

namespace {

struct JointSpec {
  const char* name;
  std::size_t parent;
  double length;
  Vec3 rest;
};

// y grows downward (image convention); negative y is up. The out-of-plane
// z components give every bone a preferred lean so the depth sign of a
// sampled pose is predictable from its 2D projection most of the time.
const JointSpec kJoints[14] = {
    {"pelvis", 0, 0.0, {0, 0, 0}},
    {"spine", 0, 300.0, {0.0, -1.0, 0.22}},
    {"neck", 1, 250.0, {0.0, -1.0, 0.18}},
    {"head", 2, 200.0, {0.0, -1.0, 0.30}},
    {"l_shoulder", 2, 200.0, {-1.0, 0.05, 0.35}},
    {"l_elbow", 4, 320.0, {-0.25, 1.0, 0.40}},
    {"l_wrist", 5, 290.0, {-0.05, 1.0, 0.55}},
    {"r_shoulder", 2, 200.0, {1.0, 0.05, 0.35}},
    {"r_elbow", 7, 320.0, {0.25, 1.0, 0.40}},
    {"r_wrist", 8, 290.0, {0.05, 1.0, 0.55}},
    {"l_hip", 0, 160.0, {-1.0, 0.35, -0.12}},
    {"l_knee", 10, 470.0, {-0.03, 1.0, -0.35}},
    {"r_hip", 0, 160.0, {1.0, 0.35, -0.12}},
    {"r_knee", 12, 470.0, {0.03, 1.0, -0.35}},
};

}  // namespace

SkeletonModel default_skeleton() {
  SkeletonModel s;
  s.joint_count = 14;
  s.root = 0;
  for (const JointSpec& j : kJoints) {
    s.parents.push_back(j.parent);
    s.bone_lengths_mm.push_back(j.length);
    s.joint_names.push_back(j.name);
  }
  s.validate();
  return s;
}

const std::vector<Vec3>& default_rest_directions() {
  static const std::vector<Vec3> dirs = [] {
    std::vector<Vec3> d;
    d.push_back({0, 0, 0});  // root direction unused
    for (std::size_t j = 1; j < 14; ++j) d.push_back(kJoints[j].rest.normalized());
    return d;
  }();
  return dirs;
}

Pose3D forward_kinematics(const SkeletonModel& skel,
                          const std::vector<Vec3>& bone_directions) {
  if (bone_directions.size() != skel.joint_count)
    throw ShapeMismatch("forward_kinematics needs one direction per joint");
  for (std::size_t j = 0; j < skel.joint_count; ++j) {
    if (j == skel.root) continue;
    if (std::fabs(bone_directions[j].norm() - 1.0) > 1e-9)
      throw NonUnitDirection("bone direction " + std::to_string(j) +
                             " has norm " + std::to_string(bone_directions[j].norm()));
  }

  Pose3D p;
  p.root_index = skel.root;
  p.joints.assign(skel.joint_count, Vec3{});
  // Parents in this representation may appear after their children in
  // index order only if the table says so; resolve by walking until all
  // joints are placed.
  std::vector<bool> placed(skel.joint_count, false);
  placed[skel.root] = true;
  std::size_t remaining = skel.joint_count - 1;
  while (remaining > 0) {
    std::size_t before = remaining;
    for (std::size_t j = 0; j < skel.joint_count; ++j) {
      if (placed[j] || !placed[skel.parents[j]]) continue;
      p.joints[j] = p.joints[skel.parents[j]] +
                    bone_directions[j] * skel.bone_lengths_mm[j];
      placed[j] = true;
      --remaining;
    }
    if (remaining == before)
      throw InvalidConfig("skeleton parents are not a connected tree");
  }
  return p;
}

Pose3D root_center(const Pose3D& p) {
  Pose3D out = p;
  const Vec3 r = p.joints.at(p.root_index);
  for (Vec3& j : out.joints) j = j - r;
  out.joints[p.root_index] = {0, 0, 0};  // exact, not merely within rounding
  return out;
}

std::vector<Vec3> bone_vectors(const Pose3D& p, const SkeletonModel& skel) {
  std::vector<Vec3> out;
  out.reserve(skel.bone_count());
  for (std::size_t j : skel.non_root_joints())
    out.push_back(p.joints.at(j) - p.joints.at(skel.parents[j]));
  return out;
}

std::vector<double> bone_lengths(const Pose3D& p, const SkeletonModel& skel) {
  std::vector<double> out;
  out.reserve(skel.bone_count());
  for (const Vec3& v : bone_vectors(p, skel)) out.push_back(v.norm());
  return out;
}

std::vector<double> bone_lengths(const Pose2D& p, const SkeletonModel& skel) {
  std::vector<double> out;
  out.reserve(skel.bone_count());
  for (std::size_t j : skel.non_root_joints()) {
    const Vec2 a = p.joints.at(j);
    const Vec2 b = p.joints.at(skel.parents[j]);
    out.push_back(std::hypot(a.x - b.x, a.y - b.y));
  }
  return out;
}

Pose2D project_weak_perspective(const Pose3D& p, const CameraParams& c) {
  Pose2D out;
  out.joints.reserve(p.joints.size());
  for (const Vec3& j : p.joints)
    out.joints.push_back({c.alpha_x * j.x + c.c_x, c.alpha_y * j.y + c.c_y});
  return out;
}

namespace {

// 1-D least squares of v2 = a*v3 + b. Returns {a, b}.
std::pair<double, double> fit_axis(const std::vector<double>& v3,
                                   const std::vector<double>& v2) {
  const double n = static_cast<double>(v3.size());
  double m3 = 0, m2 = 0;
  for (std::size_t i = 0; i < v3.size(); ++i) {
    m3 += v3[i];
    m2 += v2[i];
  }
  m3 /= n;
  m2 /= n;
  double var = 0, cov = 0;
  for (std::size_t i = 0; i < v3.size(); ++i) {
    var += (v3[i] - m3) * (v3[i] - m3);
    cov += (v3[i] - m3) * (v2[i] - m2);
  }
  if (var < 1e-12)
    throw DegenerateFit("3D coordinates have zero variance along an axis");
  const double a = cov / var;
  return {a, m2 - a * m3};
}

}  // namespace

CameraParams fit_weak_perspective(const Pose3D& p3, const Pose2D& p2) {
  if (p3.joints.size() != p2.joints.size())
    throw ShapeMismatch("fit_weak_perspective joint counts differ");
  if (p3.joints.size() < 2)
    throw DegenerateFit("need at least two joints");
  std::vector<double> x3, y3, x2, y2;
  for (std::size_t i = 0; i < p3.joints.size(); ++i) {
    x3.push_back(p3.joints[i].x);
    y3.push_back(p3.joints[i].y);
    x2.push_back(p2.joints[i].x);
    y2.push_back(p2.joints[i].y);
  }
  const auto [ax, cx] = fit_axis(x3, x2);
  const auto [ay, cy] = fit_axis(y3, y2);
  return {ax, ay, cx, cy};
}

Vec3 rotate_axis_angle(const Vec3& v, const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c));
}

Pose3D perspective_correction(const Pose3D& p, const Vec2& crop_center_px,
                              const PinholeIntrinsics& intr) {
  if (intr.focal_x <= 0 || intr.focal_y <= 0)
    throw InvalidConfig("pinhole focal length must be positive");
  const Vec3 ray = Vec3{(crop_center_px.x - intr.center_x) / intr.focal_x,
                        (crop_center_px.y - intr.center_y) / intr.focal_y, 1.0}
                       .normalized();
  const Vec3 optical{0, 0, 1};
  const Vec3 axis_raw = optical.cross(ray);
  const double sin_angle = axis_raw.norm();
  if (sin_angle < 1e-15) return p;  // crop centered on the principal point
  const Vec3 axis = axis_raw * (1.0 / sin_angle);
  const double angle = std::atan2(sin_angle, optical.dot(ray));

  Pose3D out = p;
  for (Vec3& j : out.joints) j = rotate_axis_angle(j, axis, angle);
  return out;
}

}  // namespace poselift::skeleton
