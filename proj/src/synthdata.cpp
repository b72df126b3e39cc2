#include "poselift/synthdata.hpp"

#include <algorithm>
#include <cmath>

namespace poselift::synthdata {

using skeleton::CameraParams;
using skeleton::Pose2D;
using skeleton::Pose3D;
using skeleton::SkeletonModel;
using skeleton::Vec2;
using skeleton::Vec3;

void GenConfig::validate() const {
  if (image_size == 0 || heatmap_size == 0 || image_size % heatmap_size != 0)
    throw InvalidConfig("image_size must be a positive multiple of heatmap_size");
  if (sigma_px <= 0) throw InvalidConfig("sigma_px must be positive");
  if (angle_jitter < 0) throw InvalidConfig("angle_jitter must be non-negative");
  if (camera_alpha_lo <= 0 || camera_alpha_hi < camera_alpha_lo)
    throw InvalidConfig("camera alpha range must satisfy 0 < lo <= hi");
  if (camera_center_jitter_px < 0)
    throw InvalidConfig("camera_center_jitter_px must be non-negative");
  if (fraction_only2d < 0 || fraction_only2d > 1)
    throw InvalidConfig("fraction_only2d must lie in [0,1]");
}

std::size_t Dataset::full3d_count() const {
  std::size_t n = 0;
  for (const auto& s : samples)
    if (s.kind == losses::SampleKind::Full3D) ++n;
  return n;
}

const Pose3D& Dataset::eval_truth(std::size_t i) const {
  const auto& s = samples.at(i);
  if (s.gt_3d) return *s.gt_3d;
  if (i < withheld_3d.size() && withheld_3d[i]) return *withheld_3d[i];
  throw MissingAnnotation("sample " + std::to_string(i) +
                          " has no 3D truth (sidecar not loaded?)");
}

namespace {

Vec3 uniform_axis(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

Pose3D sample_pose(const SkeletonModel& skel, Rng& rng, double angle_jitter) {
  const auto& rest = skeleton::default_rest_directions();
  if (skel.joint_count != rest.size())
    throw InvalidConfig("sample_pose requires the canonical skeleton");

  std::vector<Vec3> dirs(skel.joint_count, Vec3{});
  for (std::size_t j = 0; j < skel.joint_count; ++j) {
    if (j == skel.root) continue;
    const Vec3 axis = uniform_axis(rng);
    const double angle = rng.uniform(0.0, angle_jitter);
    dirs[j] = skeleton::rotate_axis_angle(rest[j], axis, angle).normalized();
  }
  return root_center(forward_kinematics(skel, dirs));
}

CameraParams sample_camera(Rng& rng, const GenConfig& config, const Pose3D& pose) {
  config.validate();
  const double hs = static_cast<double>(config.heatmap_size);
  const std::size_t K = pose.joints.size();
  const std::size_t need_inside =
      static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(K)));

  for (int attempt = 0; attempt < 100; ++attempt) {
    CameraParams cam;
    cam.alpha_x = cam.alpha_y = rng.uniform(config.camera_alpha_lo, config.camera_alpha_hi);
    cam.c_x = hs / 2.0 + rng.uniform(-config.camera_center_jitter_px,
                                     config.camera_center_jitter_px);
    cam.c_y = hs / 2.0 + rng.uniform(-config.camera_center_jitter_px,
                                     config.camera_center_jitter_px);
    Pose2D p2 = project_weak_perspective(pose, cam);
    std::size_t inside = 0;
    for (const Vec2& j : p2.joints)
      if (j.x >= 0 && j.x < hs && j.y >= 0 && j.y < hs) ++inside;
    if (inside >= need_inside) return cam;
  }
  throw CameraSamplingExhausted("no acceptable camera after 100 draws");
}

Tensor render_heatmaps(const Pose2D& p2, const GenConfig& config) {
  const std::size_t hs = config.heatmap_size;
  const std::size_t K = p2.joints.size();
  const double inv = 1.0 / (2.0 * config.sigma_px * config.sigma_px);
  std::vector<double> data(K * hs * hs);
  for (std::size_t k = 0; k < K; ++k) {
    const double jx = p2.joints[k].x, jy = p2.joints[k].y;
    double* ch = data.data() + k * hs * hs;
    for (std::size_t v = 0; v < hs; ++v)
      for (std::size_t u = 0; u < hs; ++u) {
        const double du = static_cast<double>(u) - jx;
        const double dv = static_cast<double>(v) - jy;
        ch[v * hs + u] = std::exp(-(du * du + dv * dv) * inv);
      }
  }
  return Tensor::constant({K, hs, hs}, std::move(data));
}

DecodeResult decode_heatmap(const double* map, std::size_t height, std::size_t width) {
  std::size_t best = 0;
  double best_val = map[0];
  for (std::size_t i = 1; i < height * width; ++i)
    if (map[i] > best_val) {  // strict: ties keep the lowest row-major index
      best_val = map[i];
      best = i;
    }
  const std::ptrdiff_t bu = static_cast<std::ptrdiff_t>(best % width);
  const std::ptrdiff_t bv = static_cast<std::ptrdiff_t>(best / width);

  double wsum = 0, usum = 0, vsum = 0;
  for (std::ptrdiff_t dv = -1; dv <= 1; ++dv)
    for (std::ptrdiff_t du = -1; du <= 1; ++du) {
      const std::ptrdiff_t u = bu + du, v = bv + dv;
      if (u < 0 || v < 0 || u >= static_cast<std::ptrdiff_t>(width) ||
          v >= static_cast<std::ptrdiff_t>(height))
        continue;
      const double w = std::max(0.0, map[v * static_cast<std::ptrdiff_t>(width) + u]);
      wsum += w;
      usum += w * static_cast<double>(u);
      vsum += w * static_cast<double>(v);
    }
  if (wsum <= 0.0)
    return {{static_cast<double>(bu), static_cast<double>(bv)}, true};
  return {{usum / wsum, vsum / wsum}, false};
}

DecodeResult decode_heatmap(const Tensor& map) {
  if (map.rank() != 2) throw ShapeMismatch("decode_heatmap expects a single channel");
  return decode_heatmap(map.values().data(), map.dim(0), map.dim(1));
}

Tensor render_image(const Pose2D& p2_fullres, const SkeletonModel& skel,
                    const GenConfig& config) {
  const std::size_t S = config.image_size;
  std::vector<double> img(S * S, 0.0);

  auto shade_segment = [&](const Vec2& a, const Vec2& b) {
    const double margin = 2.0;
    const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(
        std::floor(std::min(a.x, b.x) - margin));
    const std::ptrdiff_t x1 = static_cast<std::ptrdiff_t>(
        std::ceil(std::max(a.x, b.x) + margin));
    const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(
        std::floor(std::min(a.y, b.y) - margin));
    const std::ptrdiff_t y1 = static_cast<std::ptrdiff_t>(
        std::ceil(std::max(a.y, b.y) + margin));
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, y0);
         y <= std::min<std::ptrdiff_t>(S - 1, y1); ++y)
      for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, x0);
           x <= std::min<std::ptrdiff_t>(S - 1, x1); ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        double t = 0.0;
        if (len2 > 0)
          t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
        const double cx = a.x + t * dx, cy = a.y + t * dy;
        const double dist = std::hypot(px - cx, py - cy);
        const double val = std::max(0.0, 1.0 - dist / 2.0);
        double& cell = img[y * static_cast<std::ptrdiff_t>(S) + x];
        cell = std::max(cell, val);
      }
  };

  auto shade_disc = [&](const Vec2& c, double radius) {
    const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(c.x - radius));
    const std::ptrdiff_t x1 = static_cast<std::ptrdiff_t>(std::ceil(c.x + radius));
    const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(c.y - radius));
    const std::ptrdiff_t y1 = static_cast<std::ptrdiff_t>(std::ceil(c.y + radius));
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, y0);
         y <= std::min<std::ptrdiff_t>(S - 1, y1); ++y)
      for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, x0);
           x <= std::min<std::ptrdiff_t>(S - 1, x1); ++x) {
        if (std::hypot(static_cast<double>(x) - c.x, static_cast<double>(y) - c.y) >
            radius)
          continue;
        img[y * static_cast<std::ptrdiff_t>(S) + x] = 1.0;
      }
  };

  for (std::size_t j : skel.non_root_joints())
    shade_segment(p2_fullres.joints.at(skel.parents[j]), p2_fullres.joints.at(j));
  for (const Vec2& j : p2_fullres.joints) shade_disc(j, 1.5);

  return Tensor::constant({1, S, S}, std::move(img));
}

Dataset generate_dataset(const GenConfig& config, const SkeletonModel& skel) {
  config.validate();
  skel.validate();

  Dataset ds;
  ds.config = config;
  ds.skel = skel;
  const std::size_t N = config.sample_count;
  const std::size_t only_count =
      static_cast<std::size_t>(std::lround(config.fraction_only2d * static_cast<double>(N)));
  const std::size_t full_count = N - only_count;
  const double px_scale =
      static_cast<double>(config.image_size) / static_cast<double>(config.heatmap_size);

  ds.samples.reserve(N);
  ds.cameras.reserve(N);
  ds.withheld_3d.assign(N, std::nullopt);

  for (std::size_t i = 0; i < N; ++i) {
    Rng pose_rng = Rng::derive(config.seed, {rng_stream::kPose, i});
    Pose3D pose = sample_pose(skel, pose_rng, config.angle_jitter);
    Rng cam_rng = Rng::derive(config.seed, {rng_stream::kCamera, i});
    CameraParams cam = sample_camera(cam_rng, config, pose);
    Pose2D p2 = project_weak_perspective(pose, cam);

    Pose2D p2_img;
    p2_img.joints.reserve(p2.joints.size());
    for (const Vec2& j : p2.joints) p2_img.joints.push_back({j.x * px_scale, j.y * px_scale});

    losses::AnnotatedSample s;
    s.image = render_image(p2_img, skel, config);
    s.gt_heatmaps = render_heatmaps(p2, config);
    s.gt_2d = p2;

    const bool full = i < full_count;
    if (full) {
      s.kind = losses::SampleKind::Full3D;
      s.gt_3d = pose;
      s.ref_bone_lengths_mm = bone_lengths(pose, skel);
    } else {
      s.kind = losses::SampleKind::Only2D;
      ds.withheld_3d[i] = pose;
      // Borrow the lengths of a random Full3D subject.
      Rng ref_rng = Rng::derive(config.seed, {rng_stream::kRefLengths, i});
      if (full_count == 0) {
        s.ref_bone_lengths_mm = bone_lengths(pose, skel);
      } else {
        const std::size_t pick = static_cast<std::size_t>(ref_rng.below(full_count));
        Rng donor_rng = Rng::derive(config.seed, {rng_stream::kPose, pick});
        Pose3D donor = sample_pose(skel, donor_rng, config.angle_jitter);
        s.ref_bone_lengths_mm = bone_lengths(donor, skel);
      }
    }
    ds.samples.push_back(std::move(s));
    ds.cameras.push_back(cam);
  }
  return ds;
}

}  // namespace poselift::synthdata
