#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "tofu/data/dataset.hpp"

namespace tofu::data {

// Raw image records. Header (u32 little-endian):
//   "TFU1" | count | channels | height | width | num_classes
// then `count` records of { u8 label | channels*height*width u8 pixels }.
// Pixels load as byte / 255 in CHW order; ids are record indices.
struct ImageFormat {
  std::optional<std::uint32_t> channels;
  std::optional<std::uint32_t> height;
  std::optional<std::uint32_t> width;
  std::optional<std::uint32_t> num_classes;
};

LabeledDataset decode_images(const std::vector<std::uint8_t>& bytes, const ImageFormat& expected = {});
std::vector<std::uint8_t> encode_images(const LabeledDataset& ds);

LabeledDataset load_images(const std::filesystem::path& path, const ImageFormat& expected = {});
void write_images(const LabeledDataset& ds, const std::filesystem::path& path);

}  // namespace tofu::data
