#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "poselift/network.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/synthdata.hpp"

namespace poselift::metrics {

enum class Protocol { Unscaled, GlobScaled, Procrustes };

std::string protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& name);

struct EvalReport {
  Protocol protocol = Protocol::Unscaled;
  double mpjpe_mm = 0;
  double pck_150 = 0;
  double auc = 0;
  std::vector<double> per_joint_mpjpe;
  std::vector<std::pair<double, double>> pck_curve;  // (threshold_mm, pck)
  std::size_t sample_count = 0;
  /// Mean decoded-2D error of the predicted latent heatmaps, heatmap px.
  double heatmap_err_px = 0;
  std::size_t degenerate_heatmaps = 0;
};

/// PCK thresholds: 5..150 mm in 5 mm steps (30 values). The AUC is the mean
/// PCK over this grid.
const std::vector<double>& auc_thresholds();

double mpjpe(const skeleton::Pose3D& pred, const skeleton::Pose3D& gt);
/// Fraction of joints with error strictly below the radius.
double pck(const skeleton::Pose3D& pred, const skeleton::Pose3D& gt, double radius_mm);
double auc(const skeleton::Pose3D& pred, const skeleton::Pose3D& gt);

/// Multiplies the prediction by the ratio of ground-truth to predicted
/// total bone length.
skeleton::Pose3D scale_global(const skeleton::Pose3D& pred, const skeleton::Pose3D& gt,
                              const skeleton::SkeletonModel& skel);

/// Least-squares similarity alignment (rotation + uniform scale +
/// translation) of pred onto gt, reflections excluded.
skeleton::Pose3D procrustes_align(const skeleton::Pose3D& pred,
                                  const skeleton::Pose3D& gt);

struct CropInfo {
  skeleton::PinholeIntrinsics intrinsics;
  std::vector<skeleton::Vec2> crop_centers;  // one per sample
};

/// Runs the model over a dataset (3D truth from the records or the
/// sidecar), applies perspective correction when crop information is
/// given, aligns per the protocol and accumulates the metrics.
EvalReport evaluate(const synthdata::Dataset& ds, const network::ParamStore& params,
                    const network::ModelConfig& config, Protocol protocol,
                    const std::optional<CropInfo>& crop = std::nullopt);

void write_report_json(const std::string& path, const EvalReport& report);
void write_pck_csv(const std::string& path, const EvalReport& report);

}  // namespace poselift::metrics
