#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poselift/adadelta.hpp"
#include "poselift/network.hpp"

namespace poselift::trainer {

enum class Stage : std::uint8_t { Pretrain2D = 0, Full = 1 };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

/// Everything needed to resume training bit-exactly: parameters, optimizer
/// accumulators and the batch-stream counters.
struct Checkpoint {
  std::uint16_t version = 1;
  network::ModelConfig config;
  Stage stage = Stage::Pretrain2D;
  std::uint64_t iteration = 0;
  network::ParamStore params;
  gradcore::AdadeltaState opt;
  std::vector<std::uint64_t> gen_state;
};

// Container format ("PWT1"): magic, u16 version, length-prefixed JSON
// header (model config, stage, iteration, parameter name/shape table),
// little-endian 64-bit parameter blobs in header order, optimizer-state
// blobs, generator state, and a trailing CRC32 of all preceding bytes.
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// CRC32 (IEEE 802.3) used by the checkpoint trailer.
std::uint32_t crc32(const unsigned char* data, std::size_t n);

}  // namespace poselift::trainer
