#include "tofu/data/image_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace tofu::data {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'U', '1'};
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

void write_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void expect_field(const std::optional<std::uint32_t>& expected, std::uint32_t got, const char* name,
                  std::size_t offset) {
  if (expected && *expected != got)
    throw ParseError(std::string("header field ") + name + " is " + std::to_string(got) + ", expected " +
                         std::to_string(*expected),
                     offset);
}

}  // namespace

LabeledDataset decode_images(const std::vector<std::uint8_t>& bytes, const ImageFormat& expected) {
  if (bytes.size() < kHeaderBytes) throw ParseError("file too short for the image header", bytes.size());
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw ParseError("bad magic, expected \"TFU1\"", 0);
  const auto count = read_u32(bytes, 4);
  const auto channels = read_u32(bytes, 8);
  const auto height = read_u32(bytes, 12);
  const auto width = read_u32(bytes, 16);
  const auto classes = read_u32(bytes, 20);
  expect_field(expected.channels, channels, "channels", 8);
  expect_field(expected.height, height, "height", 12);
  expect_field(expected.width, width, "width", 16);
  expect_field(expected.num_classes, classes, "num_classes", 20);
  if (channels == 0 || height == 0 || width == 0) throw ParseError("zero image dimension in header", 8);
  if (classes == 0 || classes > 256) throw ParseError("num_classes must be in [1, 256]", 20);

  const std::size_t pixels = static_cast<std::size_t>(channels) * height * width;
  const std::size_t record = 1 + pixels;
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload != static_cast<std::size_t>(count) * record) {
    const std::size_t complete = payload / record;
    throw ParseError("header declares " + std::to_string(count) + " records of " + std::to_string(record) +
                         " bytes but the payload holds " + std::to_string(payload) + " bytes",
                     kHeaderBytes + std::min<std::size_t>(complete, count) * record);
  }

  std::vector<Real> features(static_cast<std::size_t>(count) * pixels);
  std::vector<int> labels(count);
  std::vector<SampleId> ids(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t at = kHeaderBytes + r * record;
    if (bytes[at] >= classes)
      throw ParseError("label " + std::to_string(bytes[at]) + " is not below num_classes " + std::to_string(classes),
                       at);
    labels[r] = bytes[at];
    ids[r] = static_cast<SampleId>(r);
    for (std::size_t p = 0; p < pixels; ++p) features[r * pixels + p] = bytes[at + 1 + p] / 255.0;
  }
  return LabeledDataset({channels, height, width}, classes, std::move(features), std::move(labels), std::move(ids));
}

std::vector<std::uint8_t> encode_images(const LabeledDataset& ds) {
  const auto& shape = ds.sample_shape();
  if (shape.size() != 3) throw ShapeError("encode_images: samples must be (C, H, W)");
  if (ds.num_classes() > 256) throw ArgumentError("encode_images: at most 256 classes fit a u8 label");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  write_u32(out, static_cast<std::uint32_t>(ds.size()));
  for (auto d : shape) write_u32(out, static_cast<std::uint32_t>(d));
  write_u32(out, static_cast<std::uint32_t>(ds.num_classes()));
  out.reserve(out.size() + ds.size() * (1 + ds.sample_size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.push_back(static_cast<std::uint8_t>(ds.label(i)));
    for (auto v : ds.input(i)) {
      const Real clamped = std::min(1.0, std::max(0.0, v));
      out.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
    }
  }
  return out;
}

LabeledDataset load_images(const std::filesystem::path& path, const ImageFormat& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_images(bytes, expected);
}

void write_images(const LabeledDataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_images(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace tofu::data
