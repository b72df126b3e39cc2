#include "poselift/losses.hpp"

#include <cmath>

namespace poselift::losses {

using namespace poselift::gradcore;
using skeleton::Pose2D;
using skeleton::Pose3D;
using skeleton::SkeletonModel;

void LossWeights::validate() const {
  for (double w : {w_3d, w_heatmap, w_intermediate, w_proj, w_bone3d, w_bone2d})
    if (!std::isfinite(w) || w < 0)
      throw InvalidConfig("loss weights must be finite and non-negative");
}

std::vector<double> pose_to_vec(const Pose3D& p) {
  std::vector<double> v;
  v.reserve(p.joints.size() * 3);
  for (const skeleton::Vec3& j : p.joints) {
    v.push_back(j.x);
    v.push_back(j.y);
    v.push_back(j.z);
  }
  return v;
}

Pose3D vec_to_pose(const std::vector<double>& v, std::size_t root_index) {
  Pose3D p;
  p.root_index = root_index;
  p.joints.reserve(v.size() / 3);
  for (std::size_t k = 0; k * 3 + 2 < v.size(); ++k)
    p.joints.push_back({v[3 * k], v[3 * k + 1], v[3 * k + 2]});
  return p;
}

namespace {

Tensor as_row(const Tensor& t) {
  if (t.rank() == 1) return reshape(t, {1, t.dim(0)});
  if (t.rank() == 2) return t;
  throw ShapeMismatch("expected a vector or [B,N] tensor, got " + shape_str(t.shape()));
}

std::vector<double> pose2d_to_vec(const Pose2D& p) {
  std::vector<double> v;
  v.reserve(p.joints.size() * 2);
  for (const skeleton::Vec2& j : p.joints) {
    v.push_back(j.x);
    v.push_back(j.y);
  }
  return v;
}

}  // namespace

Tensor loss_3dpose(const Tensor& p3d_pred, const Pose3D& gt) {
  Tensor pred = as_row(p3d_pred);
  std::vector<double> gt_vec = pose_to_vec(gt);
  if (pred.dim(1) != gt_vec.size() || pred.dim(0) != 1)
    throw ShapeMismatch("loss_3dpose prediction " + shape_str(p3d_pred.shape()) +
                        " vs ground truth of " + std::to_string(gt.joints.size()) +
                        " joints");
  const std::size_t n = gt_vec.size();
  return mse(pred, Tensor::constant({1, n}, std::move(gt_vec)));
}

Tensor loss_heatmap(const Tensor& pred, const Tensor& gt) {
  return mse(pred, gt);
}

Tensor loss_projection(const Tensor& p2d_pred, const Pose2D& gt_2d) {
  Tensor pred = p2d_pred.rank() == 2 && p2d_pred.dim(1) == 2
                    ? reshape(p2d_pred, {1, p2d_pred.size()})
                    : as_row(p2d_pred);
  std::vector<double> gt_vec = pose2d_to_vec(gt_2d);
  if (pred.dim(1) != gt_vec.size() || pred.dim(0) != 1)
    throw ShapeMismatch("loss_projection prediction " + shape_str(p2d_pred.shape()));
  const std::size_t n = gt_vec.size();
  return mse(pred, Tensor::constant({1, n}, std::move(gt_vec)));
}

Tensor loss_bone_3d(const Tensor& p3d_pred, const Pose3D& gt, const SkeletonModel& skel) {
  Tensor pred = as_row(p3d_pred);
  Tensor pred_bones = bone_deltas(pred, skel.parents, skel.root);

  std::vector<double> gt_bones;
  gt_bones.reserve(3 * skel.bone_count());
  for (const skeleton::Vec3& v : bone_vectors(gt, skel)) {
    gt_bones.push_back(v.x);
    gt_bones.push_back(v.y);
    gt_bones.push_back(v.z);
  }
  const std::size_t n = gt_bones.size();
  return mse(pred_bones, Tensor::constant({1, n}, std::move(gt_bones)));
}

Tensor loss_bone_2d(const Tensor& p3d_pred, const std::vector<double>& ref_lengths,
                    const SkeletonModel& skel) {
  if (ref_lengths.size() != skel.bone_count())
    throw ShapeMismatch("loss_bone_2d expects " + std::to_string(skel.bone_count()) +
                        " reference lengths");
  Tensor pred = as_row(p3d_pred);
  Tensor lengths = norms3(bone_deltas(pred, skel.parents, skel.root));
  return mse(lengths, Tensor::constant({1, ref_lengths.size()},
                                       std::vector<double>(ref_lengths)));
}

namespace {

Tensor weighted_sum(const std::vector<std::pair<double, Tensor>>& terms) {
  Tensor acc;
  for (const auto& [w, t] : terms) {
    Tensor scaled = scale(t, w);
    acc = acc.empty() ? scaled : add(acc, scaled);
  }
  return acc.empty() ? Tensor::scalar_const(0.0) : acc;
}

}  // namespace

Tensor total_loss(const network::ForwardOutput& out, const AnnotatedSample& sample,
                  const LossWeights& w, const SkeletonModel& skel) {
  w.validate();
  std::vector<std::pair<double, Tensor>> terms;

  Tensor inter_sum;
  for (const Tensor& head : out.intermediate_heatmaps) {
    Tensor l = loss_heatmap(head, sample.gt_heatmaps);
    inter_sum = inter_sum.empty() ? l : add(inter_sum, l);
  }
  if (!inter_sum.empty() && !out.intermediate_heatmaps.empty())
    terms.push_back({w.w_intermediate /
                         static_cast<double>(out.intermediate_heatmaps.size()),
                     inter_sum});

  terms.push_back({w.w_heatmap, loss_heatmap(out.latent_heatmaps, sample.gt_heatmaps)});
  terms.push_back({w.w_proj, loss_projection(out.p2d, sample.gt_2d)});

  if (sample.kind == SampleKind::Full3D) {
    if (!sample.gt_3d)
      throw MissingAnnotation("Full3D sample lacks 3D ground truth");
    terms.push_back({w.w_3d, loss_3dpose(out.p3d, *sample.gt_3d)});
    terms.push_back({w.w_bone3d, loss_bone_3d(out.p3d, *sample.gt_3d, skel)});
  } else {
    terms.push_back({w.w_bone2d, loss_bone_2d(out.p3d, sample.ref_bone_lengths_mm, skel)});
  }
  return weighted_sum(terms);
}

Tensor total_loss_batch(const network::BatchForward& out,
                        const std::vector<const AnnotatedSample*>& samples,
                        std::size_t full_count, const LossWeights& w,
                        const SkeletonModel& skel) {
  w.validate();
  const std::size_t B = samples.size();
  if (B == 0) throw EmptyDataset("empty batch");
  if (full_count > B) throw ShapeMismatch("full_count exceeds batch size");
  for (std::size_t i = 0; i < B; ++i) {
    const bool is_full = samples[i]->kind == SampleKind::Full3D;
    if (is_full != (i < full_count))
      throw ShapeMismatch("batch must be ordered Full3D first");
  }

  const std::size_t K = skel.joint_count;
  const std::size_t hs = out.h2d.dim(2);
  const double fB = static_cast<double>(B);

  // Stacked 2D targets.
  std::vector<double> heat;
  heat.reserve(B * K * hs * hs);
  std::vector<double> p2;
  p2.reserve(B * 2 * K);
  for (const AnnotatedSample* s : samples) {
    heat.insert(heat.end(), s->gt_heatmaps.values().begin(),
                s->gt_heatmaps.values().end());
    for (const skeleton::Vec2& j : s->gt_2d.joints) {
      p2.push_back(j.x);
      p2.push_back(j.y);
    }
  }
  Tensor gt_heat = Tensor::constant({B, K, hs, hs}, std::move(heat));
  Tensor gt_p2 = Tensor::constant({B, 2 * K}, std::move(p2));

  std::vector<std::pair<double, Tensor>> terms;
  terms.push_back({w.w_heatmap, mse(out.h2d, gt_heat)});
  terms.push_back({w.w_intermediate, mse(out.intermediate, gt_heat)});
  terms.push_back({w.w_proj, mse(out.p2d, gt_p2)});

  if (full_count > 0) {
    std::vector<double> gt3;
    std::vector<double> gtb;
    for (std::size_t i = 0; i < full_count; ++i) {
      const Pose3D& gt = *samples[i]->gt_3d;
      std::vector<double> v = pose_to_vec(gt);
      gt3.insert(gt3.end(), v.begin(), v.end());
      for (const skeleton::Vec3& bv : bone_vectors(gt, skel)) {
        gtb.push_back(bv.x);
        gtb.push_back(bv.y);
        gtb.push_back(bv.z);
      }
    }
    Tensor pred = slice_rows(out.p3d, 0, full_count);
    Tensor l3d = mse(pred, Tensor::constant({full_count, 3 * K}, std::move(gt3)));
    Tensor lb3 = mse(bone_deltas(pred, skel.parents, skel.root),
                     Tensor::constant({full_count, 3 * (K - 1)}, std::move(gtb)));
    const double share = static_cast<double>(full_count) / fB;
    terms.push_back({w.w_3d * share, l3d});
    terms.push_back({w.w_bone3d * share, lb3});
  }
  if (full_count < B) {
    std::vector<double> ref;
    for (std::size_t i = full_count; i < B; ++i)
      ref.insert(ref.end(), samples[i]->ref_bone_lengths_mm.begin(),
                 samples[i]->ref_bone_lengths_mm.end());
    Tensor pred = slice_rows(out.p3d, full_count, B);
    Tensor lengths = norms3(bone_deltas(pred, skel.parents, skel.root));
    Tensor lb2 = mse(lengths, Tensor::constant({B - full_count, K - 1}, std::move(ref)));
    terms.push_back({w.w_bone2d * static_cast<double>(B - full_count) / fB, lb2});
  }
  return weighted_sum(terms);
}

}  // namespace poselift::losses
