#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poselift/losses.hpp"
#include "poselift/rng.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace poselift::synthdata {

using gradcore::Tensor;

/// Procedural dataset parameters. Sample i depends only on (seed, i), so
/// generation order never changes results.
struct GenConfig {
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  std::size_t heatmap_size = 16;
  double sigma_px = 0.75;
  double angle_jitter = 1.0;  // radians, max per-bone deviation from rest
  double camera_alpha_lo = 0.005;  // px per mm
  double camera_alpha_hi = 0.009;
  double camera_center_jitter_px = 1.5;
  double fraction_only2d = 0.3;

  void validate() const;
};

struct Dataset {
  GenConfig config;
  skeleton::SkeletonModel skel;
  std::vector<losses::AnnotatedSample> samples;
  std::vector<skeleton::CameraParams> cameras;  // ground-truth camera per sample
  /// Withheld 3D truth for Only2D samples (the evaluation sidecar).
  std::vector<std::optional<skeleton::Pose3D>> withheld_3d;

  std::size_t full3d_count() const;
  /// 3D truth for evaluation regardless of kind; throws MissingAnnotation
  /// if neither the record nor the sidecar has it.
  const skeleton::Pose3D& eval_truth(std::size_t i) const;
};

/// Rest pose perturbed per bone by a rotation of uniform angle in
/// [0, angle_jitter] about a uniform random axis; output is root-centered.
skeleton::Pose3D sample_pose(const skeleton::SkeletonModel& skel, Rng& rng,
                             double angle_jitter);

/// Uniform alpha (shared by both axes) and jittered principal point.
/// Rejects cameras that leave more than 10% of the projected joints outside
/// the heatmap grid; throws CameraSamplingExhausted after 100 rejections.
skeleton::CameraParams sample_camera(Rng& rng, const GenConfig& config,
                                     const skeleton::Pose3D& pose);

/// K peak-1 Gaussians evaluated at pixel centers (integer coordinates);
/// off-grid joints render their truncated tails.
Tensor render_heatmaps(const skeleton::Pose2D& p2, const GenConfig& config);

struct DecodeResult {
  skeleton::Vec2 position;
  bool degenerate = false;
};

/// Argmax then 3x3 weighted-centroid refinement (weights clamped at 0,
/// ties broken toward the lowest row-major index). An all-zero map decodes
/// to (0,0) with the degenerate flag set.
DecodeResult decode_heatmap(const double* map, std::size_t height, std::size_t width);
DecodeResult decode_heatmap(const Tensor& map);

/// Stick-figure rendering: bones shade linearly from 1 at the segment to 0
/// at 2 px; joints are 1.5 px discs; overlaps take the max. Input
/// coordinates are image pixels (= heatmap px * image_size/heatmap_size).
Tensor render_image(const skeleton::Pose2D& p2_fullres,
                    const skeleton::SkeletonModel& skel, const GenConfig& config);

/// Full procedural dataset: the leading (1 - fraction_only2d) share of
/// samples keep their 3D truth, the rest withhold it into the sidecar and
/// borrow reference bone lengths from a random Full3D sample.
Dataset generate_dataset(const GenConfig& config, const skeleton::SkeletonModel& skel);

}  // namespace poselift::synthdata
