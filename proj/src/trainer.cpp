#include "poselift/trainer.hpp"

#include <cmath>
#include <fstream>

#include "poselift/adadelta.hpp"
#include "poselift/config_json.hpp"
#include "poselift/ops.hpp"
#include "poselift/rng.hpp"

namespace poselift::trainer {

using gradcore::GradientMap;
using gradcore::Tensor;
using losses::AnnotatedSample;
using losses::SampleKind;
using synthdata::Dataset;

void RunConfig::validate() const {
  model.validate();
  weights.validate();
  if (stage1.batch_size < 1 || stage2.batch_size < 1)
    throw InvalidConfig("batch sizes must be at least 1");
  if (stage1.lr <= 0 || stage2.lr <= 0) throw InvalidConfig("lr must be positive");
  if (stage1.decay_rate <= 0 || stage2.decay_rate <= 0)
    throw InvalidConfig("decay_rate must be positive");
  if (stage2.lr_discrepancy_factor < 1)
    throw InvalidConfig("lr_discrepancy_factor must be >= 1");
  if (stage2.mix_ratio_2d < 0 || stage2.mix_ratio_2d > 1)
    throw InvalidConfig("mix_ratio_2d must lie in [0,1]");
  if (data_full3d.empty()) throw InvalidConfig("data_full3d path is required");
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"version", 1},
      {"model", config_json::to_json(c.model)},
      {"weights", config_json::to_json(c.weights)},
      {"stage1",
       {{"iterations", c.stage1.iterations},
        {"batch_size", c.stage1.batch_size},
        {"lr", c.stage1.lr},
        {"decay_rate", c.stage1.decay_rate}}},
      {"stage2",
       {{"iterations", c.stage2.iterations},
        {"batch_size", c.stage2.batch_size},
        {"lr", c.stage2.lr},
        {"decay_rate", c.stage2.decay_rate},
        {"lr_discrepancy_factor", c.stage2.lr_discrepancy_factor},
        {"mix_ratio_2d", c.stage2.mix_ratio_2d}}},
      {"data", {{"full3d", c.data_full3d}, {"only2d", c.data_only2d}}},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  config_json::check_keys(j, {"version", "data", "seed"},
                          {"model", "weights", "stage1", "stage2", "checkpoint_every"},
                          "run config");
  if (j.at("version").get<int>() != 1)
    throw InvalidConfig("unsupported run config version");

  RunConfig c;
  if (j.contains("model")) c.model = config_json::model_config_from_json(j.at("model"));
  if (j.contains("weights"))
    c.weights = config_json::loss_weights_from_json(j.at("weights"));
  if (j.contains("stage1")) {
    const nlohmann::json& s = j.at("stage1");
    config_json::check_keys(s, {}, {"iterations", "batch_size", "lr", "decay_rate"},
                            "stage1");
    if (s.contains("iterations")) c.stage1.iterations = s.at("iterations").get<std::uint64_t>();
    if (s.contains("batch_size")) c.stage1.batch_size = s.at("batch_size").get<std::size_t>();
    if (s.contains("lr")) c.stage1.lr = s.at("lr").get<double>();
    if (s.contains("decay_rate")) c.stage1.decay_rate = s.at("decay_rate").get<double>();
  }
  if (j.contains("stage2")) {
    const nlohmann::json& s = j.at("stage2");
    config_json::check_keys(
        s, {},
        {"iterations", "batch_size", "lr", "decay_rate", "lr_discrepancy_factor",
         "mix_ratio_2d"},
        "stage2");
    if (s.contains("iterations")) c.stage2.iterations = s.at("iterations").get<std::uint64_t>();
    if (s.contains("batch_size")) c.stage2.batch_size = s.at("batch_size").get<std::size_t>();
    if (s.contains("lr")) c.stage2.lr = s.at("lr").get<double>();
    if (s.contains("decay_rate")) c.stage2.decay_rate = s.at("decay_rate").get<double>();
    if (s.contains("lr_discrepancy_factor"))
      c.stage2.lr_discrepancy_factor = s.at("lr_discrepancy_factor").get<double>();
    if (s.contains("mix_ratio_2d")) c.stage2.mix_ratio_2d = s.at("mix_ratio_2d").get<double>();
  }
  const nlohmann::json& d = j.at("data");
  config_json::check_keys(d, {"full3d"}, {"only2d"}, "data");
  c.data_full3d = d.at("full3d").get<std::string>();
  if (d.contains("only2d")) c.data_only2d = d.at("only2d").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("checkpoint_every"))
    c.checkpoint_every = j.at("checkpoint_every").get<std::uint64_t>();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("bad run config JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

BatchStream::BatchStream(std::size_t full_count, std::size_t only_count,
                         std::size_t batch_size, double mix_ratio_2d,
                         std::uint64_t seed)
    : seed_(seed) {
  if (batch_size < 1) throw InvalidConfig("batch_size must be at least 1");
  only_per_batch_ = static_cast<std::size_t>(
      std::lround(mix_ratio_2d * static_cast<double>(batch_size)));
  full_per_batch_ = batch_size - only_per_batch_;
  if (full_per_batch_ > full_count)
    throw EmptyDataset("Full3D pool too small for the requested batch mix");
  if (only_per_batch_ > only_count)
    throw EmptyDataset("Only2D pool too small for the requested batch mix");
  full_perm_.resize(full_count);
  only_perm_.resize(only_count);
  reshuffle(full_perm_, rng_stream::kBatchFull, 0);
  reshuffle(only_perm_, rng_stream::kBatchOnly2d, 0);
}

void BatchStream::reshuffle(std::vector<std::size_t>& perm, std::uint64_t stream,
                            std::uint64_t epoch) {
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng = Rng::derive(seed_, {stream, epoch});
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
}

std::vector<std::size_t> BatchStream::draw(std::vector<std::size_t>& perm,
                                           std::uint64_t stream, std::uint64_t& epoch,
                                           std::uint64_t& cursor, std::size_t n) {
  std::vector<std::size_t> out;
  out.reserve(n);
  if (n == 0) return out;
  if (cursor + n > perm.size()) {  // epoch boundary: reshuffle, start over
    ++epoch;
    cursor = 0;
    reshuffle(perm, stream, epoch);
  }
  for (std::size_t i = 0; i < n; ++i) out.push_back(perm[cursor + i]);
  cursor += n;
  return out;
}

BatchStream::Batch BatchStream::next() {
  Batch b;
  b.full = draw(full_perm_, rng_stream::kBatchFull, full_epoch_, full_cursor_,
                full_per_batch_);
  b.only = draw(only_perm_, rng_stream::kBatchOnly2d, only_epoch_, only_cursor_,
                only_per_batch_);
  return b;
}

std::array<std::uint64_t, 4> BatchStream::state() const {
  return {full_epoch_, full_cursor_, only_epoch_, only_cursor_};
}

void BatchStream::restore(const std::array<std::uint64_t, 4>& s) {
  full_epoch_ = s[0];
  full_cursor_ = s[1];
  only_epoch_ = s[2];
  only_cursor_ = s[3];
  reshuffle(full_perm_, rng_stream::kBatchFull, full_epoch_);
  reshuffle(only_perm_, rng_stream::kBatchOnly2d, only_epoch_);
  if (full_cursor_ > full_perm_.size() || only_cursor_ > only_perm_.size())
    throw FormatError("batch stream state does not fit the datasets");
}

std::vector<std::size_t> pool_indices(const Dataset& ds, SampleKind kind) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].kind == kind) out.push_back(i);
  return out;
}

namespace {

double decayed_lr(double lr, double decay_rate, std::uint64_t t, std::uint64_t total) {
  const double frac = total == 0 ? 0.0
                                 : static_cast<double>(t) / static_cast<double>(total);
  return lr * std::pow(decay_rate, frac);
}

Tensor stack_images(const std::vector<const AnnotatedSample*>& batch) {
  const std::size_t B = batch.size();
  const auto& shape = batch.front()->image.shape();  // [C,S,S]
  std::vector<double> data;
  data.reserve(B * batch.front()->image.size());
  for (const AnnotatedSample* s : batch)
    data.insert(data.end(), s->image.values().begin(), s->image.values().end());
  return Tensor::constant({B, shape[0], shape[1], shape[2]}, std::move(data));
}

Tensor stack_heatmaps(const std::vector<const AnnotatedSample*>& batch) {
  const std::size_t B = batch.size();
  const auto& shape = batch.front()->gt_heatmaps.shape();  // [K,hs,hs]
  std::vector<double> data;
  data.reserve(B * batch.front()->gt_heatmaps.size());
  for (const AnnotatedSample* s : batch)
    data.insert(data.end(), s->gt_heatmaps.values().begin(),
                s->gt_heatmaps.values().end());
  return Tensor::constant({B, shape[0], shape[1], shape[2]}, std::move(data));
}

std::vector<gradcore::ParamRef> collect_refs(network::ParamStore& store,
                                             const network::Binding& binding,
                                             const GradientMap& grads,
                                             double lr_discrepancy_factor) {
  std::vector<gradcore::ParamRef> refs;
  for (auto& e : store.entries) {
    const Tensor& bound = binding.at(e.name);
    if (!bound.requires_grad()) continue;  // frozen this step
    gradcore::ParamRef r;
    r.name = e.name;
    r.value = e.data.get();
    r.grad = grads.find(bound.graph_id());
    r.lr_scale = e.pretrained ? 1.0 / lr_discrepancy_factor : 1.0;
    refs.push_back(r);
  }
  return refs;
}

void maybe_save(const Checkpoint& c, const RunConfig& run, const TrainOptions& opt,
                std::uint64_t iter, std::uint64_t total) {
  if (opt.out_dir.empty() || run.checkpoint_every == 0) return;
  if (iter == total || iter % run.checkpoint_every != 0) return;
  save_checkpoint(c, opt.out_dir + "/checkpoint_" + stage_name(c.stage) + "_" +
                         std::to_string(iter) + ".pwt");
}

void log_line(const TrainOptions& opt, std::uint64_t iter, std::uint64_t total,
              double loss) {
  if (!opt.log || opt.log_every == 0) return;
  if (iter % opt.log_every != 0 && iter != total) return;
  (*opt.log) << "iter " << iter << "/" << total << "  loss " << loss << "\n";
}

}  // namespace

Checkpoint pretrain_2d(const RunConfig& run, const Dataset& full3d,
                       const Dataset& only2d, const TrainOptions& opt) {
  run.validate();
  if (run.model.heatmap_channels != full3d.skel.joint_count)
    throw ConfigMismatch("model joint count does not match the dataset");

  // Union of both datasets' 2D annotations; identical objects count once.
  std::vector<const AnnotatedSample*> pool;
  for (const AnnotatedSample& s : full3d.samples) pool.push_back(&s);
  if (&only2d != &full3d)
    for (const AnnotatedSample& s : only2d.samples) pool.push_back(&s);
  if (pool.size() < run.stage1.batch_size)
    throw EmptyDataset("stage-1 pool smaller than one batch");

  Checkpoint ck;
  ck.config = run.model;
  ck.stage = Stage::Pretrain2D;
  ck.params = network::init_pretrain_params(run.model, run.seed);
  ck.opt = gradcore::AdadeltaState{};

  BatchStream stream(pool.size(), 0, run.stage1.batch_size, 0.0,
                     Rng::mix(run.seed, rng_stream::kBatchUnion));
  const std::size_t K = run.model.heatmap_channels;

  for (std::uint64_t t = 0; t < run.stage1.iterations; ++t) {
    BatchStream::Batch idx = stream.next();
    std::vector<const AnnotatedSample*> batch;
    batch.reserve(idx.full.size());
    for (std::size_t i : idx.full) batch.push_back(pool[i]);

    network::Binding binding =
        network::bind_params(ck.params, [](const auto&) { return true; });
    auto [inter, f3d] = network::backbone_forward(stack_images(batch), binding, run.model);
    Tensor h2d = gradcore::slice_channels(f3d, 0, K);
    Tensor gt = stack_heatmaps(batch);
    Tensor loss = gradcore::add(gradcore::scale(gradcore::mse(h2d, gt), run.weights.w_heatmap),
                                gradcore::scale(gradcore::mse(inter, gt),
                                                run.weights.w_intermediate));
    GradientMap grads = gradcore::backward(loss);
    auto refs = collect_refs(ck.params, binding, grads, 1.0);
    gradcore::adadelta_step(refs, ck.opt,
                            decayed_lr(run.stage1.lr, run.stage1.decay_rate, t,
                                       run.stage1.iterations));

    ck.iteration = t + 1;
    ck.gen_state = {stream.state()[0], stream.state()[1], stream.state()[2],
                    stream.state()[3]};
    log_line(opt, t + 1, run.stage1.iterations, loss.scalar());
    maybe_save(ck, run, opt, t + 1, run.stage1.iterations);
  }
  ck.iteration = run.stage1.iterations;
  const auto st = stream.state();
  ck.gen_state = {st[0], st[1], st[2], st[3]};
  return ck;
}

namespace {

void check_stage1_params(const Checkpoint& init) {
  for (const auto& e : init.params.entries)
    if (e.group != network::ParamGroup::Backbone &&
        e.group != network::ParamGroup::Intermediate)
      throw StageMismatch("stage-1 checkpoint contains stage-2 parameters");
}

}  // namespace

Checkpoint train_full(const RunConfig& run, const Checkpoint& init,
                      const Dataset& full3d, const Dataset& only2d,
                      const TrainOptions& opt) {
  run.validate();
  if (!(init.config == run.model))
    throw ConfigMismatch("checkpoint model config differs from the run config");

  Checkpoint ck;
  ck.config = run.model;
  ck.stage = Stage::Full;

  const auto full_pool = pool_indices(full3d, SampleKind::Full3D);
  const auto only_pool = pool_indices(only2d, SampleKind::Only2D);
  BatchStream stream(full_pool.size(), only_pool.size(), run.stage2.batch_size,
                     run.stage2.mix_ratio_2d, run.seed);

  std::uint64_t start = 0;
  if (init.stage == Stage::Pretrain2D) {
    check_stage1_params(init);
    ck.params = init.params.clone();
    network::add_fresh_params(ck.params, run.model, run.seed);
    ck.opt = gradcore::AdadeltaState{};  // new objective, fresh accumulators
  } else {
    // Resume: everything comes from the checkpoint.
    for (const auto& spec : network::param_specs(run.model))
      if (!init.params.has(spec.name))
        throw StageMismatch("resume checkpoint is missing parameter '" + spec.name + "'");
    if (init.iteration > run.stage2.iterations)
      throw StageMismatch("checkpoint iteration exceeds the configured stage length");
    ck.params = init.params.clone();
    ck.opt = init.opt;
    start = init.iteration;
    if (init.gen_state.size() != 4)
      throw FormatError("resume checkpoint lacks batch-stream state");
    stream.restore({init.gen_state[0], init.gen_state[1], init.gen_state[2],
                    init.gen_state[3]});
  }

  for (std::uint64_t t = start; t < run.stage2.iterations; ++t) {
    BatchStream::Batch idx = stream.next();
    std::vector<const AnnotatedSample*> batch;
    batch.reserve(idx.full.size() + idx.only.size());
    for (std::size_t i : idx.full) batch.push_back(&full3d.samples[full_pool[i]]);
    for (std::size_t i : idx.only) batch.push_back(&only2d.samples[only_pool[i]]);

    network::Binding binding =
        network::bind_params(ck.params, [](const auto&) { return true; });
    network::BatchForward out =
        network::model_forward_batch(stack_images(batch), binding, run.model);
    Tensor loss = losses::total_loss_batch(out, batch, idx.full.size(), run.weights,
                                           full3d.skel);
    GradientMap grads = gradcore::backward(loss);
    auto refs = collect_refs(ck.params, binding, grads, run.stage2.lr_discrepancy_factor);
    gradcore::adadelta_step(refs, ck.opt,
                            decayed_lr(run.stage2.lr, run.stage2.decay_rate, t,
                                       run.stage2.iterations));

    ck.iteration = t + 1;
    const auto st = stream.state();
    ck.gen_state = {st[0], st[1], st[2], st[3]};
    log_line(opt, t + 1, run.stage2.iterations, loss.scalar());
    maybe_save(ck, run, opt, t + 1, run.stage2.iterations);
  }
  ck.iteration = run.stage2.iterations;
  const auto st = stream.state();
  ck.gen_state = {st[0], st[1], st[2], st[3]};
  return ck;
}

Checkpoint train_camera_only(const RunConfig& run, const Checkpoint& init,
                             const Dataset& full3d, std::uint64_t iterations,
                             const TrainOptions& opt, double adadelta_eps,
                             double hidden_lr_scale) {
  run.validate();
  if (!(init.config == run.model))
    throw ConfigMismatch("checkpoint model config differs from the run config");

  Checkpoint ck;
  ck.config = run.model;
  ck.stage = Stage::Full;
  ck.params = init.params.clone();
  if (init.stage == Stage::Pretrain2D)
    network::add_fresh_params(ck.params, run.model, run.seed);
  ck.opt = gradcore::AdadeltaState{};
  ck.opt.eps = adadelta_eps;

  const auto full_pool = pool_indices(full3d, SampleKind::Full3D);
  BatchStream stream(full_pool.size(), 0, run.stage2.batch_size, 0.0, run.seed);
  const std::size_t K = run.model.heatmap_channels;

  for (std::uint64_t t = 0; t < iterations; ++t) {
    BatchStream::Batch idx = stream.next();
    std::vector<const AnnotatedSample*> batch;
    for (std::size_t i : idx.full) batch.push_back(&full3d.samples[full_pool[i]]);
    const std::size_t B = batch.size();

    std::vector<double> gt3;
    std::vector<double> gt2;
    gt3.reserve(B * 3 * K);
    gt2.reserve(B * 2 * K);
    for (const AnnotatedSample* s : batch) {
      if (!s->gt_3d) throw MissingAnnotation("camera-only training needs 3D truth");
      const auto vec = losses::pose_to_vec(*s->gt_3d);
      gt3.insert(gt3.end(), vec.begin(), vec.end());
      for (const skeleton::Vec2& j : s->gt_2d.joints) {
        gt2.push_back(j.x);
        gt2.push_back(j.y);
      }
    }
    Tensor inject = Tensor::constant({B, 3 * K}, std::move(gt3));

    network::Binding binding = network::bind_params(
        ck.params,
        [](const auto& e) { return e.group == network::ParamGroup::Camera; });
    network::BatchForward out =
        network::model_forward_batch(stack_images(batch), binding, run.model, &inject);
    Tensor loss = gradcore::mse(out.p2d, Tensor::constant({B, 2 * K}, std::move(gt2)));
    GradientMap grads = gradcore::backward(loss);
    auto refs = collect_refs(ck.params, binding, grads, 1.0);
    for (auto& r : refs)
      if (r.name.rfind("camera.0.", 0) == 0) r.lr_scale = hidden_lr_scale;
    gradcore::adadelta_step(refs, ck.opt,
                            decayed_lr(run.stage2.lr, run.stage2.decay_rate, t, iterations));
    ck.iteration = t + 1;
    log_line(opt, t + 1, iterations, loss.scalar());
  }
  const auto st = stream.state();
  ck.gen_state = {st[0], st[1], st[2], st[3]};
  return ck;
}

}  // namespace poselift::trainer
