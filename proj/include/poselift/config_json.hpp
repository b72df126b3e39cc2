#pragma once

#include <string>

#include <json.hpp>

#include "poselift/losses.hpp"
#include "poselift/network.hpp"
#include "poselift/skeleton.hpp"
#include "poselift/synthdata.hpp"

namespace poselift::config_json {

using nlohmann::json;

/// Fail-fast object reader: every key must be known, every required key
/// present. Guards config files against typos.
void check_keys(const json& j, const std::vector<std::string>& required,
                const std::vector<std::string>& optional, const std::string& context);

json to_json(const network::ModelConfig& c);
network::ModelConfig model_config_from_json(const json& j);

json to_json(const losses::LossWeights& w);
losses::LossWeights loss_weights_from_json(const json& j);

json to_json(const synthdata::GenConfig& c);
synthdata::GenConfig gen_config_from_json(const json& j);

json to_json(const skeleton::SkeletonModel& s);
skeleton::SkeletonModel skeleton_from_json(const json& j);

}  // namespace poselift::config_json
