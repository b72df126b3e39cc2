#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>

#include <json.hpp>

#include "poselift/checkpoint.hpp"
#include "poselift/losses.hpp"
#include "poselift/network.hpp"
#include "poselift/synthdata.hpp"

namespace poselift::trainer {

struct StageOneConfig {
  std::uint64_t iterations = 500;
  std::size_t batch_size = 16;
  double lr = 0.05;
  double decay_rate = 0.1;  // lr(t) = lr * decay_rate^(t/iterations)
};

struct StageTwoConfig {
  std::uint64_t iterations = 2500;
  std::size_t batch_size = 16;
  double lr = 0.05;
  double decay_rate = 0.1;
  double lr_discrepancy_factor = 100.0;  // pretrained layers get lr / factor
  double mix_ratio_2d = 0.3;             // Only2D share of each batch
};

struct RunConfig {
  network::ModelConfig model;
  losses::LossWeights weights;
  StageOneConfig stage1;
  StageTwoConfig stage2;
  std::string data_full3d;
  std::string data_only2d;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Deterministic two-pool batch mixer. Each batch takes
/// round(batch_size * mix_ratio_2d) samples from the Only2D pool and the
/// rest from the Full3D pool, without replacement within an epoch; each
/// pool reshuffles from (seed, stream, epoch) when it runs dry.
class BatchStream {
 public:
  BatchStream(std::size_t full_count, std::size_t only_count, std::size_t batch_size,
              double mix_ratio_2d, std::uint64_t seed);

  struct Batch {
    std::vector<std::size_t> full;
    std::vector<std::size_t> only;
  };
  Batch next();

  std::size_t full_per_batch() const { return full_per_batch_; }
  std::size_t only_per_batch() const { return only_per_batch_; }

  std::array<std::uint64_t, 4> state() const;
  void restore(const std::array<std::uint64_t, 4>& s);

 private:
  void reshuffle(std::vector<std::size_t>& perm, std::uint64_t stream,
                 std::uint64_t epoch);
  std::vector<std::size_t> draw(std::vector<std::size_t>& perm, std::uint64_t stream,
                                std::uint64_t& epoch, std::uint64_t& cursor,
                                std::size_t n);

  std::uint64_t seed_;
  std::size_t full_per_batch_ = 0, only_per_batch_ = 0;
  std::vector<std::size_t> full_perm_, only_perm_;
  std::uint64_t full_epoch_ = 0, full_cursor_ = 0;
  std::uint64_t only_epoch_ = 0, only_cursor_ = 0;
};

struct TrainOptions {
  std::string out_dir;  // periodic checkpoints land here when set
  std::ostream* log = nullptr;
  std::uint64_t log_every = 100;
};

/// Stage 1: trains only the backbone and intermediate head on the heatmap
/// objective over the union of both datasets' 2D annotations. Lifting and
/// camera parameters do not exist in the resulting checkpoint.
Checkpoint pretrain_2d(const RunConfig& run, const synthdata::Dataset& full3d,
                       const synthdata::Dataset& only2d, const TrainOptions& opt = {});

/// Stage 2: extends a stage-1 checkpoint with freshly seeded embedding,
/// lifting and camera parameters and trains the full objective on mixed
/// batches. Pretrained parameters step at lr / lr_discrepancy_factor.
/// A Full-stage checkpoint resumes bit-exactly.
Checkpoint train_full(const RunConfig& run, const Checkpoint& init,
                      const synthdata::Dataset& full3d, const synthdata::Dataset& only2d,
                      const TrainOptions& opt = {});

/// Trains only the camera head with ground-truth 3D poses injected in place
/// of the lifting output, against the projection objective. Used to probe
/// camera-head learnability in isolation.
///
/// The probe's optimization differs from the main stages in two knobs. The
/// output bias starts a factor ~100 from the target scale, so the optimizer
/// eps (cold-start step floor) is exposed. The same early error blast
/// otherwise drives every hidden ReLU dead before the readout can form, so
/// the hidden layer steps at hidden_lr_scale times the base rate.
Checkpoint train_camera_only(const RunConfig& run, const Checkpoint& init,
                             const synthdata::Dataset& full3d, std::uint64_t iterations,
                             const TrainOptions& opt = {}, double adadelta_eps = 1e-6,
                             double hidden_lr_scale = 1.0);

/// Training pools are selected by annotation kind: the Full3D pool comes
/// from data_full3d records with 3D truth, the Only2D pool from data_only2d
/// records without it. Both paths may point at the same mixed file.
std::vector<std::size_t> pool_indices(const synthdata::Dataset& ds,
                                      losses::SampleKind kind);

}  // namespace poselift::trainer
