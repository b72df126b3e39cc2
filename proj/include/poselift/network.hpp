#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "poselift/ops.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/tensor.hpp"

namespace poselift::network {

using gradcore::Shape;
using gradcore::Tensor;

struct ConvBlockSpec {
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  bool operator==(const ConvBlockSpec&) const = default;
};

/// Geometry of the model. The defaults reproduce the canonical layout:
/// 64x64 single-channel input, a 64-channel 16x16 latent whose first 14
/// channels are explicit joint heatmaps, a 1024-d embedding, a four-layer
/// 1024-wide lifting stack and a small camera head.
struct ModelConfig {
  std::size_t input_size = 64;
  std::size_t input_channels = 1;
  std::size_t latent_channels = 64;
  std::size_t heatmap_channels = 14;
  std::size_t latent_spatial = 16;
  std::size_t z_dim = 1024;
  std::size_t lifting_width = 1024;
  std::size_t lifting_layers = 4;
  std::size_t camera_hidden = 256;
  std::vector<ConvBlockSpec> backbone_blocks{{16, 2}, {32, 2}, {48, 1}, {64, 1}};

  void validate() const;  // throws InvalidConfig
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamGroup { Backbone, Intermediate, Embedding, Lifting, Camera };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamGroup group;
};

/// Every parameter of the model in forward order. The stage-1 subset is
/// the Backbone + Intermediate groups.
std::vector<ParamSpec> param_specs(const ModelConfig& config);
std::vector<ParamSpec> pretrain_param_specs(const ModelConfig& config);

/// Named parameter buffers. Buffers are shared into per-step bindings; the
/// optimizer mutates them only after the step's graph has been dropped.
struct ParamStore {
  struct Entry {
    std::string name;
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    ParamGroup group = ParamGroup::Backbone;
    bool pretrained = false;
  };

  std::vector<Entry> entries;

  bool has(const std::string& name) const;
  Entry& find(const std::string& name);
  const Entry& find(const std::string& name) const;
  std::size_t total_elements() const;
  /// Deep copy: buffers are duplicated so the copy can train independently.
  ParamStore clone() const;
};

/// Deterministic fan-in-scaled uniform initialization; biases zero except
/// the camera output bias, which starts at (1, 1, latent_spatial/2,
/// latent_spatial/2) so the first projections land on the heatmap grid.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);
/// Backbone + intermediate head only (stage-1 checkpoint contents).
ParamStore init_pretrain_params(const ModelConfig& config, std::uint64_t seed);
/// Adds the missing embedding/lifting/camera parameters to a stage-1 store,
/// marking the existing ones as pretrained.
void add_fresh_params(ParamStore& store, const ModelConfig& config, std::uint64_t seed);

/// Per-step view of a store: trainable entries become graph variables,
/// everything else binds as constants.
using Binding = std::map<std::string, Tensor>;
Binding bind_params(const ParamStore& store,
                    const std::function<bool(const ParamStore::Entry&)>& trainable);
Binding bind_constants(const ParamStore& store);

/// Whole-batch forward pass. Images are [B, C, S, S]; every field keeps the
/// batch dimension. When inject_p3d is given it replaces the lifting output
/// (the lifting stack is not evaluated).
struct BatchForward {
  Tensor intermediate;  // [B, K, hs, hs]
  Tensor f3d;           // [B, C, hs, hs]
  Tensor h2d;           // [B, K, hs, hs]
  Tensor depth;         // [B, C-K, hs, hs]
  Tensor z;             // [B, z_dim]
  Tensor p3d;           // [B, 3K], root joint pinned to zero
  Tensor cam;           // [B, 4]
  Tensor p2d;           // [B, 2K]
};
BatchForward model_forward_batch(const Tensor& images, const Binding& params,
                                 const ModelConfig& config,
                                 const Tensor* inject_p3d = nullptr);

/// Single-sample view of the forward pass.
struct ForwardOutput {
  std::vector<Tensor> intermediate_heatmaps;  // one per supervised depth
  Tensor latent_heatmaps;                     // [K, hs, hs]
  Tensor depth_features;                      // [C-K, hs, hs]
  Tensor z;                                   // [z_dim]
  Tensor p3d;                                 // [3K]
  Tensor cam;                                 // [4]
  Tensor p2d;                                 // [K, 2]
  skeleton::CameraParams camera() const;
};
ForwardOutput model_forward(const Tensor& image, const Binding& params,
                            const ModelConfig& config);

// Individual stages, exposed for tests and partial pipelines. All operate
// on batched tensors.
std::pair<Tensor, Tensor> backbone_forward(const Tensor& images, const Binding& params,
                                           const ModelConfig& config);
std::pair<Tensor, Tensor> split_latent(const Tensor& f3d, const ModelConfig& config);
Tensor embed(const Tensor& f3d, const Binding& params, const ModelConfig& config);
Tensor lift(const Tensor& z, const Binding& params, const ModelConfig& config);
Tensor camera_head(const Tensor& z, const Binding& params, const ModelConfig& config);

/// The network predicts root-relative poses with the root pinned at this
/// joint index.
inline constexpr std::size_t kRootJoint = 0;

}  // namespace poselift::network
