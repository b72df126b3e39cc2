#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "poselift/dataset_io.hpp"
#include "poselift/synthdata.hpp"

using namespace poselift;
using namespace poselift::synthdata;
using skeleton::Pose2D;
using skeleton::Pose3D;
using skeleton::SkeletonModel;

namespace {

GenConfig tiny_config(std::size_t n, std::uint64_t seed) {
  GenConfig c;
  c.sample_count = n;
  c.seed = seed;
  return c;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/poselift_test_") + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE_BEGIN("synthdata");

TEST_CASE("zero jitter reproduces the rest pose") {
  SkeletonModel s = skeleton::default_skeleton();
  Rng r1(1), r2(2);
  Pose3D a = sample_pose(s, r1, 0.0);
  Pose3D b = sample_pose(s, r2, 0.0);
  for (std::size_t j = 0; j < s.joint_count; ++j) {
    CHECK(a.joints[j].x == b.joints[j].x);
    CHECK(a.joints[j].y == b.joints[j].y);
    CHECK(a.joints[j].z == b.joints[j].z);
  }
}

TEST_CASE("sampled poses keep the skeleton bone lengths") {
  SkeletonModel s = skeleton::default_skeleton();
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    Pose3D p = sample_pose(s, rng, 1.0);
    auto lens = bone_lengths(p, s);
    auto joints = s.non_root_joints();
    for (std::size_t m = 0; m < lens.size(); ++m)
      CHECK(std::fabs(lens[m] - s.bone_lengths_mm[joints[m]]) < 1e-9);
    CHECK(p.joints[s.root].x == 0.0);
  }
}

TEST_CASE("pose sampling is deterministic per (seed, index)") {
  SkeletonModel s = skeleton::default_skeleton();
  Rng a = Rng::derive(99, {rng_stream::kPose, 5});
  Rng b = Rng::derive(99, {rng_stream::kPose, 5});
  Pose3D pa = sample_pose(s, a, 1.0);
  Pose3D pb = sample_pose(s, b, 1.0);
  for (std::size_t j = 0; j < s.joint_count; ++j)
    CHECK(pa.joints[j].z == pb.joints[j].z);
}

TEST_CASE("camera sampling respects the acceptance rule") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(1, 3);
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    Rng pose_rng(rng.next_u64());
    Pose3D pose = sample_pose(s, pose_rng, cfg.angle_jitter);
    Rng cam_rng(rng.next_u64());
    skeleton::CameraParams cam = sample_camera(cam_rng, cfg, pose);
    Pose2D p2 = project_weak_perspective(pose, cam);
    std::size_t inside = 0;
    for (const auto& j : p2.joints)
      if (j.x >= 0 && j.x < 16 && j.y >= 0 && j.y < 16) ++inside;
    CHECK(inside >= static_cast<std::size_t>(
                        std::ceil(0.9 * static_cast<double>(s.joint_count))));
    CHECK(cam.alpha_x == cam.alpha_y);
    CHECK(cam.alpha_x >= cfg.camera_alpha_lo);
    CHECK(cam.alpha_x <= cfg.camera_alpha_hi);
  }
}

TEST_CASE("fixed alpha range and zero jitter give a deterministic camera") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(1, 3);
  cfg.camera_alpha_lo = cfg.camera_alpha_hi = 0.007;
  cfg.camera_center_jitter_px = 0.0;
  Rng pr(5);
  Pose3D pose = sample_pose(s, pr, 0.5);
  Rng c1(9), c2(10);
  skeleton::CameraParams a = sample_camera(c1, cfg, pose);
  skeleton::CameraParams b = sample_camera(c2, cfg, pose);
  CHECK(a.alpha_x == 0.007);
  CHECK(a.c_x == 8.0);
  CHECK(a.c_y == 8.0);
  CHECK(b.alpha_x == a.alpha_x);
}

TEST_CASE("camera rejection rate stays below one half") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(1, 3);
  std::size_t draws = 0, accepts = 0;
  const double hs = 16.0;
  for (int i = 0; i < 1000; ++i) {
    Rng pr = Rng::derive(77, {rng_stream::kPose, static_cast<std::uint64_t>(i)});
    Pose3D pose = sample_pose(s, pr, cfg.angle_jitter);
    Rng cr = Rng::derive(77, {rng_stream::kCamera, static_cast<std::uint64_t>(i)});
    // Count raw acceptance of single draws.
    skeleton::CameraParams cam;
    cam.alpha_x = cam.alpha_y = cr.uniform(cfg.camera_alpha_lo, cfg.camera_alpha_hi);
    cam.c_x = hs / 2 + cr.uniform(-cfg.camera_center_jitter_px, cfg.camera_center_jitter_px);
    cam.c_y = hs / 2 + cr.uniform(-cfg.camera_center_jitter_px, cfg.camera_center_jitter_px);
    Pose2D p2 = project_weak_perspective(pose, cam);
    std::size_t inside = 0;
    for (const auto& j : p2.joints)
      if (j.x >= 0 && j.x < hs && j.y >= 0 && j.y < hs) ++inside;
    ++draws;
    if (inside >= static_cast<std::size_t>(std::ceil(0.9 * 14.0))) ++accepts;
  }
  CHECK(static_cast<double>(draws - accepts) / static_cast<double>(draws) < 0.5);
}

TEST_CASE("heatmap peak and 4-neighbor values match the formula") {
  GenConfig cfg = tiny_config(1, 1);
  Pose2D p2;
  p2.joints = {{8.0, 8.0}};
  gradcore::Tensor maps = render_heatmaps(p2, cfg);
  const std::size_t hs = cfg.heatmap_size;
  CHECK(maps[8 * hs + 8] == 1.0);
  const double neighbor = std::exp(-1.0 / (2.0 * 0.75 * 0.75));
  CHECK(maps[8 * hs + 9] == doctest::Approx(neighbor).epsilon(1e-12));
  CHECK(maps[8 * hs + 7] == doctest::Approx(neighbor).epsilon(1e-12));
  CHECK(maps[7 * hs + 8] == doctest::Approx(neighbor).epsilon(1e-12));
  CHECK(maps[9 * hs + 8] == doctest::Approx(neighbor).epsilon(1e-12));
}

TEST_CASE("decode of a one-hot map returns that pixel") {
  std::vector<double> map(16 * 16, 0.0);
  map[5 * 16 + 11] = 1.0;
  DecodeResult r = decode_heatmap(map.data(), 16, 16);
  CHECK_FALSE(r.degenerate);
  CHECK(r.position.x == 11.0);
  CHECK(r.position.y == 5.0);
}

TEST_CASE("decode of an all-zero map is degenerate at the origin") {
  std::vector<double> map(16 * 16, 0.0);
  DecodeResult r = decode_heatmap(map.data(), 16, 16);
  CHECK(r.degenerate);
  CHECK(r.position.x == 0.0);
  CHECK(r.position.y == 0.0);
}

TEST_CASE("render/decode round trip stays within half a pixel") {
  GenConfig cfg = tiny_config(1, 1);
  Rng rng(13);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(0.0, 15.0);
    const double y = rng.uniform(0.0, 15.0);
    Pose2D p2;
    p2.joints = {{x, y}};
    gradcore::Tensor map = render_heatmaps(p2, cfg);
    DecodeResult r = decode_heatmap(map.values().data(), 16, 16);
    REQUIRE_FALSE(r.degenerate);
    worst = std::max(worst, std::hypot(r.position.x - x, r.position.y - y));
  }
  CHECK(worst <= 0.5);
}

TEST_CASE("specific render/decode example near (7.3, 4.6)") {
  GenConfig cfg = tiny_config(1, 1);
  Pose2D p2;
  p2.joints = {{7.3, 4.6}};
  gradcore::Tensor map = render_heatmaps(p2, cfg);
  DecodeResult r = decode_heatmap(map.values().data(), 16, 16);
  CHECK(std::hypot(r.position.x - 7.3, r.position.y - 4.6) <= 0.5);
}

TEST_CASE("render_image: off-canvas pose gives a zero image") {
  GenConfig cfg = tiny_config(1, 1);
  SkeletonModel s = skeleton::default_skeleton();
  Pose2D p2;
  p2.joints.assign(s.joint_count, {-500.0, -500.0});
  gradcore::Tensor img = render_image(p2, s, cfg);
  for (double v : img.values()) CHECK(v == 0.0);
}

TEST_CASE("render_image: a vertical bone writes ones along its column") {
  GenConfig cfg = tiny_config(1, 1);
  SkeletonModel s;
  s.joint_count = 2;
  s.root = 0;
  s.parents = {0, 0};
  s.bone_lengths_mm = {0, 100};
  s.joint_names = {"a", "b"};
  Pose2D p2;
  p2.joints = {{32.0, 10.0}, {32.0, 50.0}};
  gradcore::Tensor img = render_image(p2, s, cfg);
  for (int y = 12; y <= 48; ++y) CHECK(img[y * 64 + 32] == 1.0);
}

TEST_CASE("generate_dataset splits kinds exactly and is reproducible") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(10, 42);
  cfg.fraction_only2d = 0.3;
  Dataset ds = generate_dataset(cfg, s);
  REQUIRE(ds.samples.size() == 10);
  CHECK(ds.full3d_count() == 7);
  for (std::size_t i = 0; i < 7; ++i)
    CHECK(ds.samples[i].kind == losses::SampleKind::Full3D);
  for (std::size_t i = 7; i < 10; ++i) {
    CHECK(ds.samples[i].kind == losses::SampleKind::Only2D);
    CHECK_FALSE(ds.samples[i].gt_3d.has_value());
    REQUIRE(ds.withheld_3d[i].has_value());
  }

  // Every emitted heatmap decodes to its 2D annotation within half a pixel.
  for (const auto& sm : ds.samples) {
    const std::size_t hs = cfg.heatmap_size;
    for (std::size_t k = 0; k < s.joint_count; ++k) {
      DecodeResult r =
          decode_heatmap(sm.gt_heatmaps.values().data() + k * hs * hs, hs, hs);
      const auto& j = sm.gt_2d.joints[k];
      if (j.x >= 0 && j.x < 16 && j.y >= 0 && j.y < 16)
        CHECK(std::hypot(r.position.x - j.x, r.position.y - j.y) <= 0.5);
    }
  }
}

TEST_CASE("Only2D reference lengths come from a Full3D subject") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(20, 5);
  cfg.fraction_only2d = 0.5;
  Dataset ds = generate_dataset(cfg, s);
  // All subjects share one skeleton, so every reference must equal the
  // bone lengths of each Full3D record (which equal the model's lengths).
  const auto& ref0 = ds.samples[0].ref_bone_lengths_mm;
  for (const auto& sm : ds.samples) {
    REQUIRE(sm.ref_bone_lengths_mm.size() == s.bone_count());
    for (std::size_t m = 0; m < ref0.size(); ++m)
      CHECK(sm.ref_bone_lengths_mm[m] == doctest::Approx(ref0[m]).epsilon(1e-9));
  }
}

TEST_CASE("dataset files are byte-identical across runs and round trip") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(6, 77);
  const std::string p1 = temp_path("ds1.pld");
  const std::string p2 = temp_path("ds2.pld");
  write_dataset(p1, generate_dataset(cfg, s));
  write_dataset(p2, generate_dataset(cfg, s));
  CHECK(slurp(p1) == slurp(p2));
  CHECK(slurp(sidecar_path(p1)) == slurp(sidecar_path(p2)));

  Dataset back = read_dataset(p1);
  REQUIRE(back.samples.size() == 6);
  CHECK(back.config.seed == 77);
  CHECK(back.skel.joint_count == s.joint_count);
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    const bool has_truth = back.samples[i].kind == losses::SampleKind::Full3D ||
                           back.withheld_3d[i].has_value();
    CHECK(has_truth);
    CHECK_NOTHROW(back.eval_truth(i));
  }
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove(sidecar_path(p1).c_str());
  std::remove(sidecar_path(p2).c_str());
}

TEST_CASE("empty dataset writes and reads back") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(0, 1);
  const std::string p = temp_path("empty.pld");
  write_dataset(p, generate_dataset(cfg, s));
  Dataset back = read_dataset(p);
  CHECK(back.samples.empty());
  std::remove(p.c_str());
}

TEST_CASE("truncated dataset raises FormatError") {
  SkeletonModel s = skeleton::default_skeleton();
  GenConfig cfg = tiny_config(2, 3);
  const std::string p = temp_path("trunc.pld");
  write_dataset(p, generate_dataset(cfg, s));
  std::string data = slurp(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size() / 2));
  out.close();
  CHECK_THROWS_AS(read_dataset(p), FormatError);
  std::remove(p.c_str());
  std::remove(sidecar_path(p).c_str());
}

TEST_SUITE_END();
