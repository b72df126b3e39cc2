#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "poselift/metrics.hpp"
#include "poselift/trainer.hpp"

namespace poselift::trainer {

struct AblationRow {
  std::string key;    // a .. d
  std::string label;
  metrics::EvalReport report;  // glob-scaled evaluation
};

struct AblationResult {
  std::vector<AblationRow> rows;
  double pck(const std::string& key) const;
};

/// The four-configuration study: (a) 3D + bone losses on Full3D data only,
/// (b) adds the latent heatmap loss and Only2D data, (c) adds the
/// projection and bone-length losses and Only2D data instead, (d) the full
/// objective. All configurations share one stage-1 checkpoint and the same
/// seeds, so differences come from the objectives, not initialization.
/// Passing `pretrained` skips the internal stage-1 run.
AblationResult run_ablation(const RunConfig& base, const synthdata::Dataset& full3d,
                            const synthdata::Dataset& only2d,
                            const synthdata::Dataset& eval_set,
                            const TrainOptions& opt = {},
                            const Checkpoint* pretrained = nullptr);

void print_ablation_table(std::ostream& os, const AblationResult& result);
void write_ablation_json(const std::string& path, const AblationResult& result);

}  // namespace poselift::trainer
