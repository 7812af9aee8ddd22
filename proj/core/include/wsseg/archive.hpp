#pragma once

#include "wsseg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wsseg {

/// A float32 tensor with an explicit shape, as stored in archives.
struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  std::size_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

/// Ordered collection of named float32 tensors.
///
/// On-disk layout is a plain sequence of records, no header:
///   u32 name length | name bytes (UTF-8) | u8 dtype (0 = float32) | u8 rank |
///   rank x u32 dims | row-major float32 payload
/// All integers and floats are little-endian. Records appear in insertion order.
class TensorArchive {
 public:
  void put(std::string name, Tensor tensor);
  /// Stores a matrix as a rank-2 tensor (rows, cols).
  void put(std::string name, const Matrix& matrix);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  /// Rank-1 tensors become a single row; rank-2 map directly.
  Matrix matrix(std::string_view name) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  std::string serialize() const;
  static TensorArchive deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

  bool operator==(const TensorArchive& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace wsseg
