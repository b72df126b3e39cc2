#include "poselift/config_json.hpp"

#include <algorithm>

namespace poselift::config_json {

void check_keys(const json& j, const std::vector<std::string>& required,
                const std::vector<std::string>& optional, const std::string& context) {
  if (!j.is_object()) throw InvalidConfig(context + " must be a JSON object");
  for (const std::string& k : required)
    if (!j.contains(k))
      throw InvalidConfig(context + " is missing required key '" + k + "'");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    const bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                       std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) throw InvalidConfig(context + " has unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
T get_or(const json& j, const std::string& key, const T& fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

json to_json(const network::ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.backbone_blocks)
    blocks.push_back({{"out_channels", b.out_channels}, {"stride", b.stride}});
  return {
      {"input_size", c.input_size},
      {"input_channels", c.input_channels},
      {"latent_channels", c.latent_channels},
      {"heatmap_channels", c.heatmap_channels},
      {"latent_spatial", c.latent_spatial},
      {"z_dim", c.z_dim},
      {"lifting_width", c.lifting_width},
      {"lifting_layers", c.lifting_layers},
      {"camera_hidden", c.camera_hidden},
      {"backbone_blocks", blocks},
  };
}

network::ModelConfig model_config_from_json(const json& j) {
  check_keys(j, {},
             {"input_size", "input_channels", "latent_channels", "heatmap_channels",
              "latent_spatial", "z_dim", "lifting_width", "lifting_layers",
              "camera_hidden", "backbone_blocks"},
             "model config");
  network::ModelConfig c;
  c.input_size = get_or<std::size_t>(j, "input_size", c.input_size);
  c.input_channels = get_or<std::size_t>(j, "input_channels", c.input_channels);
  c.latent_channels = get_or<std::size_t>(j, "latent_channels", c.latent_channels);
  c.heatmap_channels = get_or<std::size_t>(j, "heatmap_channels", c.heatmap_channels);
  c.latent_spatial = get_or<std::size_t>(j, "latent_spatial", c.latent_spatial);
  c.z_dim = get_or<std::size_t>(j, "z_dim", c.z_dim);
  c.lifting_width = get_or<std::size_t>(j, "lifting_width", c.lifting_width);
  c.lifting_layers = get_or<std::size_t>(j, "lifting_layers", c.lifting_layers);
  c.camera_hidden = get_or<std::size_t>(j, "camera_hidden", c.camera_hidden);
  if (j.contains("backbone_blocks")) {
    c.backbone_blocks.clear();
    for (const json& b : j.at("backbone_blocks")) {
      check_keys(b, {"out_channels", "stride"}, {}, "backbone block");
      c.backbone_blocks.push_back(
          {b.at("out_channels").get<std::size_t>(), b.at("stride").get<std::size_t>()});
    }
  }
  c.validate();
  return c;
}

json to_json(const losses::LossWeights& w) {
  return {
      {"w_3d", w.w_3d},
      {"w_heatmap", w.w_heatmap},
      {"w_intermediate", w.w_intermediate},
      {"w_proj", w.w_proj},
      {"w_bone3d", w.w_bone3d},
      {"w_bone2d", w.w_bone2d},
  };
}

losses::LossWeights loss_weights_from_json(const json& j) {
  check_keys(j, {},
             {"w_3d", "w_heatmap", "w_intermediate", "w_proj", "w_bone3d", "w_bone2d"},
             "loss weights");
  losses::LossWeights w;
  w.w_3d = get_or<double>(j, "w_3d", w.w_3d);
  w.w_heatmap = get_or<double>(j, "w_heatmap", w.w_heatmap);
  w.w_intermediate = get_or<double>(j, "w_intermediate", w.w_intermediate);
  w.w_proj = get_or<double>(j, "w_proj", w.w_proj);
  w.w_bone3d = get_or<double>(j, "w_bone3d", w.w_bone3d);
  w.w_bone2d = get_or<double>(j, "w_bone2d", w.w_bone2d);
  w.validate();
  return w;
}

json to_json(const synthdata::GenConfig& c) {
  return {
      {"sample_count", c.sample_count},
      {"seed", c.seed},
      {"image_size", c.image_size},
      {"heatmap_size", c.heatmap_size},
      {"sigma_px", c.sigma_px},
      {"angle_jitter", c.angle_jitter},
      {"camera_alpha_range", {c.camera_alpha_lo, c.camera_alpha_hi}},
      {"camera_center_jitter_px", c.camera_center_jitter_px},
      {"fraction_only2d", c.fraction_only2d},
  };
}

synthdata::GenConfig gen_config_from_json(const json& j) {
  check_keys(j, {"sample_count", "seed"},
             {"image_size", "heatmap_size", "sigma_px", "angle_jitter",
              "camera_alpha_range", "camera_center_jitter_px", "fraction_only2d"},
             "generation config");
  synthdata::GenConfig c;
  c.sample_count = j.at("sample_count").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.image_size = get_or<std::size_t>(j, "image_size", c.image_size);
  c.heatmap_size = get_or<std::size_t>(j, "heatmap_size", c.heatmap_size);
  c.sigma_px = get_or<double>(j, "sigma_px", c.sigma_px);
  c.angle_jitter = get_or<double>(j, "angle_jitter", c.angle_jitter);
  if (j.contains("camera_alpha_range")) {
    const json& r = j.at("camera_alpha_range");
    if (!r.is_array() || r.size() != 2)
      throw InvalidConfig("camera_alpha_range must be [lo, hi]");
    c.camera_alpha_lo = r[0].get<double>();
    c.camera_alpha_hi = r[1].get<double>();
  }
  c.camera_center_jitter_px =
      get_or<double>(j, "camera_center_jitter_px", c.camera_center_jitter_px);
  c.fraction_only2d = get_or<double>(j, "fraction_only2d", c.fraction_only2d);
  c.validate();
  return c;
}

json to_json(const skeleton::SkeletonModel& s) {
  return {
      {"joint_count", s.joint_count},
      {"root", s.root},
      {"parents", s.parents},
      {"bone_lengths_mm", s.bone_lengths_mm},
      {"joint_names", s.joint_names},
  };
}

skeleton::SkeletonModel skeleton_from_json(const json& j) {
  check_keys(j, {"joint_count", "root", "parents", "bone_lengths_mm", "joint_names"},
             {}, "skeleton");
  skeleton::SkeletonModel s;
  s.joint_count = j.at("joint_count").get<std::size_t>();
  s.root = j.at("root").get<std::size_t>();
  s.parents = j.at("parents").get<std::vector<std::size_t>>();
  s.bone_lengths_mm = j.at("bone_lengths_mm").get<std::vector<double>>();
  s.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  s.validate();
  return s;
}

}  // namespace poselift::config_json
