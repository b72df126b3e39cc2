#pragma once

#include <string>

#include "poselift/synthdata.hpp"

namespace poselift::synthdata {

// Dataset container format ("PLD1"): magic, a length-prefixed UTF-8 JSON
// manifest (generation config + skeleton), then sample_count fixed-layout
// records of little-endian 32-bit floats in field order: image, heatmaps,
// 2D joints, 3D joints (NaN-filled when withheld), camera, kind byte,
// reference bone lengths. The sidecar ("PLD1S") carries the withheld 3D
// truth in the same sample order.

std::string sidecar_path(const std::string& dataset_path);

/// Writes the dataset and, when any sample withholds 3D truth, its sidecar.
void write_dataset(const std::string& path, const Dataset& ds);

/// Reads a dataset; merges the sidecar when present and requested.
Dataset read_dataset(const std::string& path, bool load_sidecar = true);

}  // namespace poselift::synthdata
