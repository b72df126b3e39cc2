// poselift: train and evaluate the monocular 3D pose lifting toolkit on
// synthetic stick-figure data.
//
// Subcommands: gen, pretrain, train, eval, gradcheck, ablate. Exit codes:
// 0 success, 1 validation error, 2 I/O error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "poselift/ablation.hpp"
#include "poselift/config_json.hpp"
#include "poselift/dataset_io.hpp"
#include "poselift/errors.hpp"
#include "poselift/gradcheck_suite.hpp"
#include "poselift/metrics.hpp"
#include "poselift/trainer.hpp"

namespace {

using namespace poselift;

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("bad JSON in '" + path + "': " + e.what());
  }
}

synthdata::GenConfig load_gen_config(const std::string& path) {
  nlohmann::json j = load_json(path);
  config_json::check_keys(j, {"version", "gen"}, {}, "generation config file");
  if (j.at("version").get<int>() != 1)
    throw InvalidConfig("unsupported generation config version");
  return config_json::gen_config_from_json(j.at("gen"));
}

struct LoadedData {
  synthdata::Dataset full3d;
  synthdata::Dataset only2d;
  bool shared = false;
};

LoadedData load_training_data(const trainer::RunConfig& run) {
  LoadedData d;
  d.full3d = synthdata::read_dataset(run.data_full3d);
  if (run.data_only2d.empty() || run.data_only2d == run.data_full3d) {
    d.shared = true;
  } else {
    d.only2d = synthdata::read_dataset(run.data_only2d);
  }
  return d;
}

const synthdata::Dataset& only2d_view(const LoadedData& d) {
  return d.shared ? d.full3d : d.only2d;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

metrics::CropInfo load_crop_info(const std::string& path) {
  nlohmann::json j = load_json(path);
  config_json::check_keys(
      j, {"version", "focal_x", "focal_y", "center_x", "center_y", "crop_centers"}, {},
      "crop info");
  if (j.at("version").get<int>() != 1)
    throw InvalidConfig("unsupported crop info version");
  metrics::CropInfo info;
  info.intrinsics.focal_x = j.at("focal_x").get<double>();
  info.intrinsics.focal_y = j.at("focal_y").get<double>();
  info.intrinsics.center_x = j.at("center_x").get<double>();
  info.intrinsics.center_y = j.at("center_y").get<double>();
  for (const nlohmann::json& c : j.at("crop_centers")) {
    if (!c.is_array() || c.size() != 2)
      throw InvalidConfig("crop_centers entries must be [u, v]");
    info.crop_centers.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return info;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"poselift: monocular 3D pose lifting toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, init_path, data_path, ckpt_path;
  std::string protocol_name = "unscaled", crop_path, eval_data_path;
  std::uint64_t seed = 42;
  bool seed_given = false;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    cmd->add_option("--config", config_path, "JSON config file")
        ->required(config_required);
    cmd->add_option("--seed", seed, "Seed override")->each([&](const std::string&) {
      seed_given = true;
    });
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, true);
  gen->add_option("--out", out_path, "Output dataset path")->required();

  CLI::App* pretrain = app.add_subcommand("pretrain", "Stage-1 heatmap pretraining");
  add_common(pretrain, true);
  pretrain->add_option("--out", out_path, "Output directory")->required();

  CLI::App* train = app.add_subcommand("train", "Stage-2 full training");
  add_common(train, true);
  train->add_option("--init", init_path,
                    "Initial checkpoint (stage-1, or stage-2 to resume)")
      ->required();
  train->add_option("--out", out_path, "Output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval, false);
  eval->add_option("--data", data_path, "Dataset path")->required();
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint path")->required();
  eval->add_option("--protocol", protocol_name,
                   "unscaled | glob_scaled | procrustes");
  eval->add_option("--crop-info", crop_path, "Perspective-correction crop info JSON");
  eval->add_option("--out", out_path, "Output directory")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference suite");
  add_common(gradcheck, false);

  CLI::App* ablate = app.add_subcommand("ablate", "Four-configuration study");
  add_common(ablate, true);
  ablate->add_option("--eval-data", eval_data_path, "Held-out dataset path")->required();
  ablate->add_option("--out", out_path, "Output directory")->required();

  app.parse(argc, argv);

  if (gen->parsed()) {
    synthdata::GenConfig cfg = load_gen_config(config_path);
    if (seed_given) cfg.seed = seed;
    synthdata::Dataset ds = synthdata::generate_dataset(cfg, skeleton::default_skeleton());
    synthdata::write_dataset(out_path, ds);
    std::cout << "wrote " << ds.samples.size() << " samples (" << ds.full3d_count()
              << " with 3D labels) to " << out_path << "\n";
    return 0;
  }

  if (pretrain->parsed() || train->parsed()) {
    trainer::RunConfig run = trainer::load_run_config(config_path);
    if (seed_given) run.seed = seed;
    ensure_dir(out_path);
    LoadedData data = load_training_data(run);
    trainer::TrainOptions opt;
    opt.out_dir = out_path;
    opt.log = &std::cout;

    if (pretrain->parsed()) {
      trainer::Checkpoint ck =
          trainer::pretrain_2d(run, data.full3d, only2d_view(data), opt);
      const std::string path = out_path + "/pretrain.pwt";
      trainer::save_checkpoint(ck, path);
      std::cout << "wrote " << path << "\n";
    } else {
      trainer::Checkpoint init = trainer::load_checkpoint(init_path);
      trainer::Checkpoint ck =
          trainer::train_full(run, init, data.full3d, only2d_view(data), opt);
      const std::string path = out_path + "/full.pwt";
      trainer::save_checkpoint(ck, path);
      std::cout << "wrote " << path << "\n";
    }
    return 0;
  }

  if (eval->parsed()) {
    trainer::Checkpoint ck = trainer::load_checkpoint(ckpt_path);
    synthdata::Dataset ds = synthdata::read_dataset(data_path);
    std::optional<metrics::CropInfo> crop;
    if (!crop_path.empty()) crop = load_crop_info(crop_path);
    metrics::EvalReport rep = metrics::evaluate(
        ds, ck.params, ck.config, metrics::protocol_from_name(protocol_name), crop);
    ensure_dir(out_path);
    metrics::write_report_json(out_path + "/report.json", rep);
    metrics::write_pck_csv(out_path + "/pck_curve.csv", rep);
    std::cout << "protocol " << metrics::protocol_name(rep.protocol) << ": MPJPE "
              << rep.mpjpe_mm << " mm, PCK@150 " << 100.0 * rep.pck_150 << "%, AUC "
              << 100.0 * rep.auc << "%, heatmap err " << rep.heatmap_err_px
              << " px over " << rep.sample_count << " samples\n";
    return 0;
  }

  if (gradcheck->parsed()) {
    const auto results = gradcore::run_gradcheck_suite(seed);
    double worst = 0;
    for (const auto& r : results) {
      std::cout << r.op << ": max rel err " << r.max_rel_err << "\n";
      worst = std::max(worst, r.max_rel_err);
    }
    std::cout << "worst: " << worst << (worst < 1e-4 ? "  (PASS)" : "  (FAIL)") << "\n";
    return worst < 1e-4 ? 0 : 1;
  }

  if (ablate->parsed()) {
    trainer::RunConfig run = trainer::load_run_config(config_path);
    if (seed_given) run.seed = seed;
    ensure_dir(out_path);
    LoadedData data = load_training_data(run);
    synthdata::Dataset eval_set = synthdata::read_dataset(eval_data_path);
    trainer::TrainOptions opt;
    opt.log = &std::cout;
    opt.log_every = 500;
    trainer::AblationResult result =
        trainer::run_ablation(run, data.full3d, only2d_view(data), eval_set, opt);
    trainer::print_ablation_table(std::cout, result);
    trainer::write_ablation_json(out_path + "/ablation.json", result);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const CLI::ParseError& e) {
    return CLI::App{}.exit(e) == 0 ? 0 : 1;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const ChecksumError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
