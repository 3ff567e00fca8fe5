#include "melstream/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "melstream/audio_io.hpp"
#include "melstream/error.hpp"

namespace melstream {

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::CorruptData, "weights file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

}  // namespace

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(shape_product(shape), 0.0f) {}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_product(shape)) {
    throw Error(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                              " does not match shape " + shape_string(shape));
  }
}

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors) {
  std::vector<std::uint8_t> out{'M', 'S', 'T', 'W'};
  put_u32(out, kWeightsFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw Error(ErrorCode::InvalidConfig, "tensor name too long");
    if (t.rank() > 0xFF) throw Error(ErrorCode::InvalidConfig, "tensor rank too large");
    out.push_back(static_cast<std::uint8_t>(name.size() & 0xFF));
    out.push_back(static_cast<std::uint8_t>(name.size() >> 8));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (const std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (const float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorMap decode_tensors(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.str(4) != "MSTW") throw Error(ErrorCode::CorruptHeader, "bad weights magic");
  const std::uint32_t version = in.u32();
  if (version != kWeightsFormatVersion) {
    throw Error(ErrorCode::UnsupportedFormat, "weights format version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  TensorMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = in.u16();
    std::string name = in.str(name_len);
    const std::uint8_t rank = in.u8();
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    const std::size_t n = shape_product(shape);
    in.need(n * 4);
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(in.u32());
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw Error(ErrorCode::CorruptData, "duplicate tensor '" + name + "'");
    }
  }
  if (!in.done()) throw Error(ErrorCode::CorruptData, "trailing bytes after last tensor");
  return out;
}

void write_tensors(const std::filesystem::path& path, const TensorMap& tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

TensorMap read_tensors(const std::filesystem::path& path) { return decode_tensors(read_file(path)); }

}  // namespace melstream
