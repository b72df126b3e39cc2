#pragma once

#include <optional>
#include <vector>

#include "poselift/network.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace poselift::losses {

using gradcore::Tensor;

/// Mixing weights of the training objective. The paper never states
/// weights; these defaults put all terms within a workable range on the
/// synthetic data and are fully configurable.
struct LossWeights {
  double w_3d = 1.0;
  double w_heatmap = 10.0;
  double w_intermediate = 10.0;
  double w_proj = 0.1;
  double w_bone3d = 0.5;
  double w_bone2d = 0.05;

  void validate() const;  // finite and non-negative
};

enum class SampleKind : std::uint8_t { Full3D = 0, Only2D = 1 };

/// One training/evaluation record. gt_3d is present iff kind == Full3D;
/// Only2D records instead carry reference bone lengths borrowed from a
/// Full3D subject.
struct AnnotatedSample {
  Tensor image;        // [C, S, S]
  Tensor gt_heatmaps;  // [K, hs, hs]
  skeleton::Pose2D gt_2d;
  std::optional<skeleton::Pose3D> gt_3d;
  std::vector<double> ref_bone_lengths_mm;  // K-1 entries
  SampleKind kind = SampleKind::Full3D;
};

/// Flattens a pose to the (x,y,z)*K layout the graph uses.
std::vector<double> pose_to_vec(const skeleton::Pose3D& p);
skeleton::Pose3D vec_to_pose(const std::vector<double>& v, std::size_t root_index);

/// MSE between the predicted vectorized pose and root-relative ground
/// truth, mm^2. Accepts [3K] or [1,3K] predictions.
Tensor loss_3dpose(const Tensor& p3d_pred, const skeleton::Pose3D& gt);

/// MSE over all channels and pixels; used for the latent heatmaps and for
/// every intermediate head.
Tensor loss_heatmap(const Tensor& pred, const Tensor& gt);

/// MSE in pixel units between the projected pose and the 2D ground truth.
/// Gradients flow into both the pose and the camera.
Tensor loss_projection(const Tensor& p2d_pred, const skeleton::Pose2D& gt_2d);

/// MSE between predicted and ground-truth bone vectors, mm^2.
Tensor loss_bone_3d(const Tensor& p3d_pred, const skeleton::Pose3D& gt,
                    const skeleton::SkeletonModel& skel);

/// MSE between predicted scalar bone lengths and reference lengths, mm^2.
/// The only 3D-structure constraint available on Only2D samples.
Tensor loss_bone_2d(const Tensor& p3d_pred, const std::vector<double>& ref_lengths,
                    const skeleton::SkeletonModel& skel);

/// Weighted combination for one sample. Full3D uses the 3D, bone-vector,
/// heatmap, intermediate and projection terms; Only2D replaces the 3D
/// terms with the bone-length term and never reads gt_3d.
Tensor total_loss(const network::ForwardOutput& out, const AnnotatedSample& sample,
                  const LossWeights& w, const skeleton::SkeletonModel& skel);

/// Batched objective equal to the mean of per-sample total_loss values.
/// Samples must be ordered Full3D first; full_count says how many.
Tensor total_loss_batch(const network::BatchForward& out,
                        const std::vector<const AnnotatedSample*>& samples,
                        std::size_t full_count, const LossWeights& w,
                        const skeleton::SkeletonModel& skel);

}  // namespace poselift::losses
