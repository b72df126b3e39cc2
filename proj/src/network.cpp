#include "poselift/network.hpp"

#include <cmath>

#include "poselift/rng.hpp"

namespace poselift::network {

using namespace poselift::gradcore;

void ModelConfig::validate() const {
  if (input_size == 0 || input_channels == 0 || latent_channels == 0 ||
      latent_spatial == 0 || z_dim == 0 || lifting_width == 0 ||
      camera_hidden == 0 || heatmap_channels == 0)
    throw InvalidConfig("model extents must be positive");
  if (heatmap_channels >= latent_channels)
    throw InvalidConfig("heatmap_channels must be smaller than latent_channels");
  if (lifting_layers < 2)
    throw InvalidConfig("lifting needs at least two layers for the residual");
  if (z_dim != lifting_width)
    throw InvalidConfig("the residual from z requires lifting_width == z_dim");
  if (backbone_blocks.size() < 2)
    throw InvalidConfig("backbone needs at least two blocks");
  std::size_t stride_product = 1;
  for (const ConvBlockSpec& b : backbone_blocks) {
    if (b.out_channels == 0 || b.stride == 0 || b.stride > 2)
      throw InvalidConfig("backbone block needs channels > 0 and stride in {1,2}");
    stride_product *= b.stride;
  }
  if (stride_product * latent_spatial != input_size)
    throw InvalidConfig("backbone strides times latent_spatial must equal input_size");
  if (backbone_blocks.back().out_channels != latent_channels)
    throw InvalidConfig("final backbone block must emit latent_channels channels");
  // The intermediate head reads the penultimate block at the latent
  // resolution, so the final block must not stride.
  if (backbone_blocks.back().stride != 1)
    throw InvalidConfig("final backbone block must have stride 1");
}

namespace {

constexpr std::size_t kKernel = 3;  // all backbone convolutions are 3x3, pad 1

std::size_t penultimate_spatial(const ModelConfig& c) {
  std::size_t s = c.input_size;
  for (std::size_t i = 0; i + 1 < c.backbone_blocks.size(); ++i)
    s /= c.backbone_blocks[i].stride;
  return s;
}

}  // namespace

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> specs = pretrain_param_specs(c);

  const std::size_t flat = c.latent_channels * c.latent_spatial * c.latent_spatial;
  specs.push_back({"embed.weight", {flat, c.z_dim}, ParamGroup::Embedding});
  specs.push_back({"embed.bias", {c.z_dim}, ParamGroup::Embedding});

  std::size_t in = c.z_dim;
  for (std::size_t l = 0; l < c.lifting_layers; ++l) {
    const std::string p = "lift." + std::to_string(l);
    specs.push_back({p + ".weight", {in, c.lifting_width}, ParamGroup::Lifting});
    specs.push_back({p + ".bias", {c.lifting_width}, ParamGroup::Lifting});
    in = c.lifting_width;
  }
  specs.push_back({"lift.out.weight", {c.lifting_width, 3 * c.heatmap_channels},
                   ParamGroup::Lifting});
  specs.push_back({"lift.out.bias", {3 * c.heatmap_channels}, ParamGroup::Lifting});

  specs.push_back({"camera.0.weight", {c.z_dim, c.camera_hidden}, ParamGroup::Camera});
  specs.push_back({"camera.0.bias", {c.camera_hidden}, ParamGroup::Camera});
  specs.push_back({"camera.out.weight", {c.camera_hidden, 4}, ParamGroup::Camera});
  specs.push_back({"camera.out.bias", {4}, ParamGroup::Camera});
  return specs;
}

std::vector<ParamSpec> pretrain_param_specs(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> specs;
  std::size_t in = c.input_channels;
  for (std::size_t i = 0; i < c.backbone_blocks.size(); ++i) {
    const std::string p = "backbone." + std::to_string(i);
    specs.push_back({p + ".weight",
                     {c.backbone_blocks[i].out_channels, in, kKernel, kKernel},
                     ParamGroup::Backbone});
    specs.push_back({p + ".bias", {c.backbone_blocks[i].out_channels},
                     ParamGroup::Backbone});
    in = c.backbone_blocks[i].out_channels;
  }
  const std::size_t penult = c.backbone_blocks[c.backbone_blocks.size() - 2].out_channels;
  specs.push_back({"inter.weight", {c.heatmap_channels, penult, 1, 1},
                   ParamGroup::Intermediate});
  specs.push_back({"inter.bias", {c.heatmap_channels}, ParamGroup::Intermediate});
  return specs;
}

bool ParamStore::has(const std::string& name) const {
  for (const Entry& e : entries)
    if (e.name == name) return true;
  return false;
}

ParamStore::Entry& ParamStore::find(const std::string& name) {
  for (Entry& e : entries)
    if (e.name == name) return e;
  throw InvalidConfig("unknown parameter '" + name + "'");
}

const ParamStore::Entry& ParamStore::find(const std::string& name) const {
  for (const Entry& e : entries)
    if (e.name == name) return e;
  throw InvalidConfig("unknown parameter '" + name + "'");
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const Entry& e : entries) n += e.data->size();
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  out.entries = entries;
  for (Entry& e : out.entries)
    e.data = std::make_shared<std::vector<double>>(*e.data);
  return out;
}

namespace {

// Parameter index inside the full spec list seeds its stream, so a store
// grown in two stages matches one initialized in a single pass.
std::size_t spec_index(const ModelConfig& config, const std::string& name) {
  const auto specs = param_specs(config);
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].name == name) return i;
  throw InvalidConfig("parameter '" + name + "' not in model spec");
}

std::size_t fan_in(const ParamSpec& spec) {
  if (spec.shape.size() == 4)  // conv kernel [F,C,kh,kw]
    return spec.shape[1] * spec.shape[2] * spec.shape[3];
  if (spec.shape.size() == 2)  // linear weight [I,O]
    return spec.shape[0];
  return 0;  // bias
}

ParamStore::Entry init_entry(const ModelConfig& config, const ParamSpec& spec,
                             std::uint64_t seed) {
  ParamStore::Entry e;
  e.name = spec.name;
  e.shape = spec.shape;
  e.group = spec.group;
  e.data = std::make_shared<std::vector<double>>(numel(spec.shape), 0.0);

  const std::size_t fi = fan_in(spec);
  if (fi > 0) {
    Rng rng = Rng::derive(seed, {rng_stream::kParamInit, spec_index(config, spec.name)});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fi));
    for (double& v : *e.data) v = rng.uniform(-bound, bound);
  } else if (spec.name == "camera.out.bias") {
    (*e.data)[0] = 1.0;
    (*e.data)[1] = 1.0;
    (*e.data)[2] = static_cast<double>(config.latent_spatial) / 2.0;
    (*e.data)[3] = static_cast<double>(config.latent_spatial) / 2.0;
  }
  return e;
}

}  // namespace

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamStore store;
  for (const ParamSpec& spec : param_specs(config))
    store.entries.push_back(init_entry(config, spec, seed));
  return store;
}

ParamStore init_pretrain_params(const ModelConfig& config, std::uint64_t seed) {
  ParamStore store;
  for (const ParamSpec& spec : pretrain_param_specs(config))
    store.entries.push_back(init_entry(config, spec, seed));
  return store;
}

void add_fresh_params(ParamStore& store, const ModelConfig& config, std::uint64_t seed) {
  for (ParamStore::Entry& e : store.entries) e.pretrained = true;
  for (const ParamSpec& spec : param_specs(config)) {
    if (store.has(spec.name)) continue;
    ParamStore::Entry e = init_entry(config, spec, seed);
    e.pretrained = false;
    store.entries.push_back(std::move(e));
  }
}

Binding bind_params(const ParamStore& store,
                    const std::function<bool(const ParamStore::Entry&)>& trainable) {
  Binding b;
  for (const ParamStore::Entry& e : store.entries) {
    if (trainable(e))
      b.emplace(e.name, Tensor::variable(e.shape, e.data));
    else
      b.emplace(e.name, Tensor::constant_view(e.shape, e.data));
  }
  return b;
}

Binding bind_constants(const ParamStore& store) {
  return bind_params(store, [](const ParamStore::Entry&) { return false; });
}

namespace {

const Tensor& param(const Binding& b, const std::string& name) {
  auto it = b.find(name);
  if (it == b.end()) throw InvalidConfig("binding lacks parameter '" + name + "'");
  return it->second;
}

}  // namespace

std::pair<Tensor, Tensor> backbone_forward(const Tensor& images, const Binding& params,
                                           const ModelConfig& config) {
  if (images.rank() != 4 || images.dim(1) != config.input_channels ||
      images.dim(2) != config.input_size || images.dim(3) != config.input_size)
    throw ShapeMismatch("backbone input " + shape_str(images.shape()) +
                        " does not match the configured image size");

  Tensor cur = images;
  Tensor penult;
  const std::size_t n = config.backbone_blocks.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string p = "backbone." + std::to_string(i);
    cur = relu(bias_channels(
        conv2d(cur, param(params, p + ".weight"), config.backbone_blocks[i].stride, 1),
        param(params, p + ".bias")));
    if (i == n - 2) penult = cur;
  }

  Tensor inter = bias_channels(conv2d(penult, param(params, "inter.weight"), 1, 0),
                               param(params, "inter.bias"));
  if (penultimate_spatial(config) != config.latent_spatial)
    throw InvalidConfig("intermediate head expects the penultimate block at the "
                        "latent resolution");
  return {inter, cur};
}

std::pair<Tensor, Tensor> split_latent(const Tensor& f3d, const ModelConfig& config) {
  if (f3d.rank() != 4 || f3d.dim(1) != config.latent_channels)
    throw ShapeMismatch("split_latent expects " +
                        std::to_string(config.latent_channels) + " channels, got " +
                        shape_str(f3d.shape()));
  Tensor h2d = slice_channels(f3d, 0, config.heatmap_channels);
  Tensor depth = slice_channels(f3d, config.heatmap_channels, config.latent_channels);
  return {h2d, depth};
}

Tensor embed(const Tensor& f3d, const Binding& params, const ModelConfig& config) {
  const std::size_t flat = config.latent_channels * config.latent_spatial *
                           config.latent_spatial;
  if (f3d.size() % flat != 0)
    throw ShapeMismatch("embed input " + shape_str(f3d.shape()));
  const std::size_t B = f3d.size() / flat;
  Tensor x = reshape(f3d, {B, flat});
  return relu(linear(x, param(params, "embed.weight"), param(params, "embed.bias")));
}

Tensor lift(const Tensor& z, const Binding& params, const ModelConfig& config) {
  if (z.rank() != 2 || z.dim(1) != config.z_dim)
    throw ShapeMismatch("lift expects z:[B," + std::to_string(config.z_dim) + "]");
  const std::size_t B = z.dim(0);

  Tensor h = z;
  for (std::size_t l = 0; l < config.lifting_layers; ++l) {
    const std::string p = "lift." + std::to_string(l);
    h = relu(linear(h, param(params, p + ".weight"), param(params, p + ".bias")));
    if (l == 1) h = add(h, z);  // residual from the embedding
  }
  Tensor raw = linear(h, param(params, "lift.out.weight"), param(params, "lift.out.bias"));

  // Pin the root joint's coordinates to exactly zero.
  std::vector<double> mask(B * 3 * config.heatmap_channels, 1.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < 3; ++d)
      mask[b * 3 * config.heatmap_channels + 3 * kRootJoint + d] = 0.0;
  return mul(raw, Tensor::constant({B, 3 * config.heatmap_channels}, std::move(mask)));
}

Tensor camera_head(const Tensor& z, const Binding& params, const ModelConfig& config) {
  if (z.rank() != 2 || z.dim(1) != config.z_dim)
    throw ShapeMismatch("camera_head expects z:[B," + std::to_string(config.z_dim) + "]");
  Tensor h = relu(linear(z, param(params, "camera.0.weight"), param(params, "camera.0.bias")));
  return linear(h, param(params, "camera.out.weight"), param(params, "camera.out.bias"));
}

BatchForward model_forward_batch(const Tensor& images, const Binding& params,
                                 const ModelConfig& config, const Tensor* inject_p3d) {
  BatchForward out;
  auto [inter, f3d] = backbone_forward(images, params, config);
  out.intermediate = inter;
  out.f3d = f3d;
  auto [h2d, depth] = split_latent(f3d, config);
  out.h2d = h2d;
  out.depth = depth;
  out.z = embed(f3d, params, config);
  if (inject_p3d) {
    if (inject_p3d->rank() != 2 || inject_p3d->dim(0) != images.dim(0) ||
        inject_p3d->dim(1) != 3 * config.heatmap_channels)
      throw ShapeMismatch("injected p3d must be [B,3K]");
    out.p3d = *inject_p3d;
  } else {
    out.p3d = lift(out.z, params, config);
  }
  out.cam = camera_head(out.z, params, config);
  out.p2d = project_points(out.p3d, out.cam);
  return out;
}

ForwardOutput model_forward(const Tensor& image, const Binding& params,
                            const ModelConfig& config) {
  Tensor batched;
  if (image.rank() == 3)
    batched = reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  else if (image.rank() == 4 && image.dim(0) == 1)
    batched = image;
  else
    throw ShapeMismatch("model_forward expects a single image");

  BatchForward bf = model_forward_batch(batched, params, config);
  const std::size_t K = config.heatmap_channels;
  const std::size_t hs = config.latent_spatial;

  ForwardOutput out;
  out.intermediate_heatmaps.push_back(reshape(bf.intermediate, {K, hs, hs}));
  out.latent_heatmaps = reshape(bf.h2d, {K, hs, hs});
  out.depth_features = reshape(bf.depth, {config.latent_channels - K, hs, hs});
  out.z = reshape(bf.z, {config.z_dim});
  out.p3d = reshape(bf.p3d, {3 * K});
  out.cam = reshape(bf.cam, {4});
  out.p2d = reshape(bf.p2d, {K, 2});
  return out;
}

skeleton::CameraParams ForwardOutput::camera() const {
  return {cam[0], cam[1], cam[2], cam[3]};
}

}  // namespace poselift::network
