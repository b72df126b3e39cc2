#include "poselift/ablation.hpp"

#include <fstream>
#include <iomanip>

#include "poselift/config_json.hpp"

namespace poselift::trainer {

double AblationResult::pck(const std::string& key) const {
  for (const AblationRow& r : rows)
    if (r.key == key) return r.report.pck_150;
  throw InvalidConfig("no ablation row '" + key + "'");
}

AblationResult run_ablation(const RunConfig& base, const synthdata::Dataset& full3d,
                            const synthdata::Dataset& only2d,
                            const synthdata::Dataset& eval_set,
                            const TrainOptions& opt, const Checkpoint* pretrained) {
  base.validate();

  struct Variant {
    const char* key;
    const char* label;
    bool latent_2d;
    bool projection;
    bool only2d_data;
  };
  // Mirrors the four-row study: baseline, each contribution alone, both.
  const Variant variants[4] = {
      {"a", "baseline: direct 3D + bone loss", false, false, false},
      {"b", "+ 2D latent loss + 2D-only data", true, false, true},
      {"c", "+ 3D-to-2D projection + 2D-only data", false, true, true},
      {"d", "full: 2D latent + projection + 2D-only data", true, true, true},
  };

  Checkpoint pre;
  if (pretrained) {
    pre = *pretrained;
  } else {
    if (opt.log) (*opt.log) << "[ablate] stage-1 pretraining (shared)\n";
    pre = pretrain_2d(base, full3d, only2d, opt);
  }

  AblationResult result;
  for (const Variant& v : variants) {
    RunConfig run = base;
    if (!v.latent_2d) {
      run.weights.w_heatmap = 0;
      run.weights.w_intermediate = 0;
    }
    if (!v.projection) {
      run.weights.w_proj = 0;
      run.weights.w_bone2d = 0;  // the 2D-data bone regularizer rides on projection
    }
    if (!v.only2d_data) run.stage2.mix_ratio_2d = 0;

    if (opt.log)
      (*opt.log) << "[ablate] training configuration " << v.key << " (" << v.label
                 << ")\n";
    Checkpoint ck = train_full(run, pre, full3d, only2d, opt);
    metrics::EvalReport rep = metrics::evaluate(eval_set, ck.params, ck.config,
                                                metrics::Protocol::GlobScaled);
    result.rows.push_back({v.key, v.label, rep});
  }
  return result;
}

void print_ablation_table(std::ostream& os, const AblationResult& result) {
  os << std::left << std::setw(48) << "configuration" << std::right << std::setw(10)
     << "PCK@150" << std::setw(8) << "AUC" << std::setw(12) << "MPJPE(mm)" << "\n";
  for (const AblationRow& r : result.rows) {
    os << std::left << std::setw(48) << ("(" + r.key + ") " + r.label) << std::right
       << std::fixed << std::setprecision(1) << std::setw(9)
       << 100.0 * r.report.pck_150 << "%" << std::setprecision(1) << std::setw(8)
       << 100.0 * r.report.auc << std::setprecision(1) << std::setw(12)
       << r.report.mpjpe_mm << "\n";
    os.unsetf(std::ios::fixed);
  }
}

void write_ablation_json(const std::string& path, const AblationResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow& r : result.rows)
    rows.push_back({{"key", r.key},
                    {"label", r.label},
                    {"pck_150", r.report.pck_150},
                    {"auc", r.report.auc},
                    {"mpjpe_mm", r.report.mpjpe_mm}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << nlohmann::json({{"rows", rows}}).dump(2) << "\n";
  if (!out.good()) throw IoError("write failure on '" + path + "'");
}

}  // namespace poselift::trainer
