#include "wsseg/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace wsseg {
namespace {

constexpr std::uint8_t kFloat32Tag = 0;

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("tensor archive truncated at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void TensorArchive::put(std::string name, Tensor tensor) {
  if (tensor.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw ShapeError("tensor rank too large: " + name);
  }
  if (tensor.element_count() != tensor.values.size()) {
    throw ShapeError("tensor payload does not match its shape: " + name);
  }
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second].second = std::move(tensor);
    return;
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

void TensorArchive::put(std::string name, const Matrix& matrix) {
  Tensor t;
  t.shape = {static_cast<std::uint32_t>(matrix.rows()), static_cast<std::uint32_t>(matrix.cols())};
  t.values.resize(static_cast<std::size_t>(matrix.size()));
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
      t.values[static_cast<std::size_t>(i * matrix.cols() + j)] = static_cast<float>(matrix(i, j));
    }
  }
  put(std::move(name), std::move(t));
}

bool TensorArchive::contains(std::string_view name) const { return index_.contains(std::string(name)); }

const Tensor& TensorArchive::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw DataError("tensor archive has no entry '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Matrix TensorArchive::matrix(std::string_view name) const {
  const Tensor& t = at(name);
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  if (t.shape.size() == 1) {
    cols = t.shape[0];
  } else if (t.shape.size() == 2) {
    rows = t.shape[0];
    cols = t.shape[1];
  } else if (!t.shape.empty()) {
    throw ShapeError("tensor '" + std::string(name) + "' has rank " + std::to_string(t.shape.size()) +
                     ", expected 1 or 2");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = t.values[static_cast<std::size_t>(i)];
  return m;
}

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::string TensorArchive::serialize() const {
  std::string out;
  for (const auto& [name, t] : entries_) {
    append_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(kFloat32Tag));
    out.push_back(static_cast<char>(t.shape.size()));
    for (auto d : t.shape) append_u32(out, d);
    for (float v : t.values) append_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorArchive TensorArchive::deserialize(std::string_view bytes) {
  TensorArchive archive;
  Reader in(bytes);
  while (!in.done()) {
    std::string name(in.take(in.u32()));
    if (auto tag = in.u8(); tag != kFloat32Tag) {
      throw DataError("tensor '" + name + "' has unsupported dtype tag " + std::to_string(tag));
    }
    Tensor t;
    t.shape.resize(in.u8());
    for (auto& d : t.shape) d = in.u32();
    t.values.resize(t.element_count());
    for (auto& v : t.values) v = std::bit_cast<float>(in.u32());
    archive.put(std::move(name), std::move(t));
  }
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor archive '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace wsseg
