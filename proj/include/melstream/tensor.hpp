#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace melstream {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

// Row-major float32 n-d array.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<float> values);

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }

  bool operator==(const Tensor&) const = default;
};

// Binary tensor container: "MSTW", u32 version, u32 count, then per entry
// u16 name length + UTF-8 name, u8 rank, u32 dims, float32 values; all
// little-endian.
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors);
TensorMap decode_tensors(std::span<const std::uint8_t> bytes);

void write_tensors(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_tensors(const std::filesystem::path& path);

}  // namespace melstream
