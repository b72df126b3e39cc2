#include "poselift/metrics.hpp"

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>

#include "poselift/config_json.hpp"
#include "poselift/losses.hpp"

namespace poselift::metrics {

using skeleton::Pose3D;
using skeleton::SkeletonModel;
using skeleton::Vec3;

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Unscaled: return "unscaled";
    case Protocol::GlobScaled: return "glob_scaled";
    case Protocol::Procrustes: return "procrustes";
  }
  throw InvalidConfig("unknown protocol");
}

Protocol protocol_from_name(const std::string& name) {
  if (name == "unscaled") return Protocol::Unscaled;
  if (name == "glob_scaled") return Protocol::GlobScaled;
  if (name == "procrustes") return Protocol::Procrustes;
  throw InvalidConfig("unknown protocol '" + name +
                      "' (expected unscaled|glob_scaled|procrustes)");
}

const std::vector<double>& auc_thresholds() {
  static const std::vector<double> grid = [] {
    std::vector<double> t;
    for (int mm = 5; mm <= 150; mm += 5) t.push_back(static_cast<double>(mm));
    return t;
  }();
  return grid;
}

namespace {

void require_same_joints(const Pose3D& a, const Pose3D& b) {
  if (a.joints.size() != b.joints.size())
    throw ShapeMismatch("pose joint counts differ: " +
                        std::to_string(a.joints.size()) + " vs " +
                        std::to_string(b.joints.size()));
}

}  // namespace

double mpjpe(const Pose3D& pred, const Pose3D& gt) {
  require_same_joints(pred, gt);
  double acc = 0;
  for (std::size_t j = 0; j < pred.joints.size(); ++j)
    acc += (pred.joints[j] - gt.joints[j]).norm();
  return acc / static_cast<double>(pred.joints.size());
}

double pck(const Pose3D& pred, const Pose3D& gt, double radius_mm) {
  require_same_joints(pred, gt);
  if (radius_mm <= 0) throw InvalidConfig("pck radius must be positive");
  std::size_t hits = 0;
  for (std::size_t j = 0; j < pred.joints.size(); ++j)
    if ((pred.joints[j] - gt.joints[j]).norm() < radius_mm) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.joints.size());
}

double auc(const Pose3D& pred, const Pose3D& gt) {
  double acc = 0;
  for (double t : auc_thresholds()) acc += pck(pred, gt, t);
  return acc / static_cast<double>(auc_thresholds().size());
}

Pose3D scale_global(const Pose3D& pred, const Pose3D& gt, const SkeletonModel& skel) {
  double pred_total = 0, gt_total = 0;
  for (double l : bone_lengths(pred, skel)) pred_total += l;
  for (double l : bone_lengths(gt, skel)) gt_total += l;
  if (pred_total <= 0)
    throw DegeneratePose("predicted pose has zero total bone length");
  const double s = gt_total / pred_total;
  Pose3D out = pred;
  for (Vec3& j : out.joints) j = j * s;
  return out;
}

Pose3D procrustes_align(const Pose3D& pred, const Pose3D& gt) {
  require_same_joints(pred, gt);
  const std::size_t K = pred.joints.size();
  if (K < 3) throw DegeneratePose("procrustes needs at least 3 joints");

  Vec3 mp{}, mg{};
  for (std::size_t j = 0; j < K; ++j) {
    mp = mp + pred.joints[j];
    mg = mg + gt.joints[j];
  }
  mp = mp * (1.0 / static_cast<double>(K));
  mg = mg * (1.0 / static_cast<double>(K));

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double pred_var = 0;
  for (std::size_t j = 0; j < K; ++j) {
    const Vec3 p = pred.joints[j] - mp;
    const Vec3 g = gt.joints[j] - mg;
    Eigen::Vector3d pv(p.x, p.y, p.z), gv(g.x, g.y, g.z);
    cov += gv * pv.transpose();
    pred_var += pv.squaredNorm();
  }
  if (pred_var < 1e-12) throw DegeneratePose("predicted joints are coincident");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Rank deficiency means the points are collinear and the rotation is not
  // unique.
  if (svd.singularValues()(1) < 1e-9 * (svd.singularValues()(0) + 1e-30))
    throw DegeneratePose("joints are collinear; similarity alignment is ambiguous");

  Eigen::Vector3d d = Eigen::Vector3d::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    d(2) = -1.0;  // exclude reflections by flipping the smallest direction
  const Eigen::Matrix3d R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const double s = (svd.singularValues().cwiseProduct(d)).sum() / pred_var;

  Pose3D out = pred;
  for (std::size_t j = 0; j < K; ++j) {
    const Vec3 p = pred.joints[j] - mp;
    Eigen::Vector3d v = s * (R * Eigen::Vector3d(p.x, p.y, p.z));
    out.joints[j] = Vec3{v(0), v(1), v(2)} + mg;
  }
  return out;
}

EvalReport evaluate(const synthdata::Dataset& ds, const network::ParamStore& params,
                    const network::ModelConfig& config, Protocol protocol,
                    const std::optional<CropInfo>& crop) {
  config.validate();
  if (config.heatmap_channels != ds.skel.joint_count)
    throw ConfigMismatch("model predicts " + std::to_string(config.heatmap_channels) +
                         " joints, dataset skeleton has " +
                         std::to_string(ds.skel.joint_count));
  if (config.input_size != ds.config.image_size ||
      config.latent_spatial != ds.config.heatmap_size)
    throw ConfigMismatch("model resolution does not match the dataset");
  if (crop && crop->crop_centers.size() != ds.samples.size())
    throw ConfigMismatch("crop_info needs one center per sample");

  const std::size_t K = ds.skel.joint_count;
  const auto& thresholds = auc_thresholds();

  EvalReport rep;
  rep.protocol = protocol;
  rep.sample_count = ds.samples.size();
  rep.per_joint_mpjpe.assign(K, 0.0);
  std::vector<std::size_t> curve_hits(thresholds.size(), 0);

  network::Binding binding = network::bind_constants(params);
  double heat_err = 0;
  std::size_t heat_count = 0;

  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const losses::AnnotatedSample& s = ds.samples[i];
    network::ForwardOutput out = network::model_forward(s.image, binding, config);

    Pose3D pred = losses::vec_to_pose(out.p3d.values(), ds.skel.root);
    if (crop)
      pred = perspective_correction(pred, crop->crop_centers[i], crop->intrinsics);
    const Pose3D& truth = ds.eval_truth(i);

    Pose3D aligned = pred;
    switch (protocol) {
      case Protocol::Unscaled: break;
      case Protocol::GlobScaled: aligned = scale_global(pred, truth, ds.skel); break;
      case Protocol::Procrustes: aligned = procrustes_align(pred, truth); break;
    }

    for (std::size_t j = 0; j < K; ++j) {
      const double err = (aligned.joints[j] - truth.joints[j]).norm();
      rep.per_joint_mpjpe[j] += err;
      for (std::size_t t = 0; t < thresholds.size(); ++t)
        if (err < thresholds[t]) ++curve_hits[t];
    }

    // Decoded-2D accuracy of the explicit heatmap channels.
    const std::size_t hs = config.latent_spatial;
    for (std::size_t k = 0; k < K; ++k) {
      const synthdata::DecodeResult dec = synthdata::decode_heatmap(
          out.latent_heatmaps.values().data() + k * hs * hs, hs, hs);
      if (dec.degenerate) {
        ++rep.degenerate_heatmaps;
        continue;
      }
      heat_err += std::hypot(dec.position.x - s.gt_2d.joints[k].x,
                             dec.position.y - s.gt_2d.joints[k].y);
      ++heat_count;
    }
  }

  const double total_joints = static_cast<double>(rep.sample_count * K);
  if (rep.sample_count > 0) {
    double mp = 0;
    for (std::size_t j = 0; j < K; ++j) {
      mp += rep.per_joint_mpjpe[j];
      rep.per_joint_mpjpe[j] /= static_cast<double>(rep.sample_count);
    }
    rep.mpjpe_mm = mp / total_joints;
    for (std::size_t t = 0; t < thresholds.size(); ++t)
      rep.pck_curve.emplace_back(thresholds[t],
                                 static_cast<double>(curve_hits[t]) / total_joints);
    rep.pck_150 = rep.pck_curve.back().second;
    double a = 0;
    for (const auto& [t, v] : rep.pck_curve) a += v;
    rep.auc = a / static_cast<double>(rep.pck_curve.size());
    rep.heatmap_err_px = heat_count > 0 ? heat_err / static_cast<double>(heat_count) : 0;
  }
  return rep;
}

void write_report_json(const std::string& path, const EvalReport& rep) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [t, v] : rep.pck_curve) curve.push_back({{"threshold_mm", t}, {"pck", v}});
  nlohmann::json j = {
      {"protocol", protocol_name(rep.protocol)},
      {"mpjpe_mm", rep.mpjpe_mm},
      {"pck_150", rep.pck_150},
      {"auc", rep.auc},
      {"per_joint_mpjpe", rep.per_joint_mpjpe},
      {"pck_curve", curve},
      {"sample_count", rep.sample_count},
      {"heatmap_err_px", rep.heatmap_err_px},
      {"degenerate_heatmaps", rep.degenerate_heatmaps},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out.good()) throw IoError("write failure on '" + path + "'");
}

void write_pck_csv(const std::string& path, const EvalReport& rep) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "threshold_mm,pck\n";
  for (const auto& [t, v] : rep.pck_curve) out << t << "," << v << "\n";
  if (!out.good()) throw IoError("write failure on '" + path + "'");
}

}  // namespace poselift::metrics
