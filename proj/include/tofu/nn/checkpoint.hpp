#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tofu/nn/model.hpp"

namespace tofu::nn {

// Binary checkpoint, all integers little-endian:
//   "TFCK" | u32 version | u32 block_count
//   block_count x { u32 layer | u8 name_len | name | u64 offset | u32 rank | rank x u64 dim }
//   u64 value_count | value_count x f64
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamVector& params);
ParamVector decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ParamVector& params, const std::filesystem::path& path);
ParamVector load_checkpoint(const std::filesystem::path& path);

}  // namespace tofu::nn
