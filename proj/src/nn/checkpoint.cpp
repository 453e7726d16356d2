#include "tofu/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tofu::nn {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n)
      throw ParseError(std::string("checkpoint truncated while reading ") + what, pos_);
  }
  template <class T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamVector& params) {
  if (params.values.size() != params.layout.total)
    throw ShapeError("encode_checkpoint: value count does not match layout");
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.layout.blocks.size()));
  for (const auto& b : params.layout.blocks) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(b.layer));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(b.name.size()));
    w.bytes(b.name.data(), b.name.size());
    w.le<std::uint64_t>(b.offset);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(b.shape.size()));
    for (auto d : b.shape) w.le<std::uint64_t>(d);
  }
  w.le<std::uint64_t>(params.values.size());
  for (auto v : params.values) w.f64(v);
  return w.take();
}

ParamVector decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw ParseError("not a checkpoint file (bad magic)", 0);
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  ParamVector params;
  const auto nblocks = r.le<std::uint32_t>("block count");
  std::size_t expected_offset = 0;
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    ParamBlock b;
    b.layer = r.le<std::uint32_t>("block layer");
    const auto name_len = r.le<std::uint8_t>("block name length");
    b.name = r.str(name_len, "block name");
    const std::size_t at = r.pos();
    b.offset = r.le<std::uint64_t>("block offset");
    if (b.offset != expected_offset) throw ParseError("block offsets are not contiguous", at);
    const auto rank = r.le<std::uint32_t>("block rank");
    if (rank > 8) throw ParseError("implausible block rank " + std::to_string(rank), r.pos() - 4);
    for (std::uint32_t k = 0; k < rank; ++k) b.shape.push_back(r.le<std::uint64_t>("block dim"));
    expected_offset += shape_product(b.shape);
    params.layout.blocks.push_back(std::move(b));
  }
  params.layout.total = expected_offset;
  const std::size_t at = r.pos();
  const auto count = r.le<std::uint64_t>("value count");
  if (count != expected_offset)
    throw ParseError("value count " + std::to_string(count) + " does not match layout total " +
                     std::to_string(expected_offset), at);
  if (count > bytes.size() / 8) throw ParseError("checkpoint truncated while reading values", r.pos());
  r.need(count * 8, "values");
  params.values.resize(count);
  for (auto& v : params.values) v = r.f64("values");
  if (!r.done()) throw ParseError("trailing bytes after checkpoint payload", r.pos());
  return params;
}

void save_checkpoint(const ParamVector& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ParamVector load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    if (dynamic_cast<const VersionError*>(&e)) throw VersionError(path.string() + ": " + e.what());
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tofu::nn
