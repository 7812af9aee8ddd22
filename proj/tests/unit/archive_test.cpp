#include "wsseg/archive.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstring>

namespace wsseg {
namespace {

TEST(TensorArchive, SerializeRoundTrip) {
  TensorArchive a;
  a.put("decoder/head/weight", Tensor{{2, 3}, {1.f, -2.f, 3.5f, 0.f, 1e-7f, -1e7f}});
  a.put("scalar", Tensor{{}, {4.25f}});
  a.put("decoder/fuse/bias", Tensor{{1, 4}, {0.f, 1.f, 2.f, 3.f}});
  const TensorArchive b = TensorArchive::deserialize(a.serialize());
  EXPECT_EQ(a, b);
  EXPECT_EQ(b.names(), (std::vector<std::string>{"decoder/head/weight", "scalar", "decoder/fuse/bias"}));
}

TEST(TensorArchive, RecordLayoutIsLittleEndianFloat32) {
  TensorArchive a;
  a.put("ab", Tensor{{2}, {1.0f, -2.0f}});
  const std::string bytes = a.serialize();
  // u32 name length, name, dtype, rank, u32 dims, payload
  ASSERT_EQ(bytes.size(), 4u + 2u + 1u + 1u + 4u + 8u);
  EXPECT_EQ(bytes.substr(0, 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(4, 2), "ab");
  EXPECT_EQ(bytes[6], '\0');
  EXPECT_EQ(bytes[7], '\x01');
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x02\x00\x00\x00", 4));
  float v = 0.f;
  std::memcpy(&v, bytes.data() + 16, 4);
  EXPECT_EQ(v, -2.0f);
}

TEST(TensorArchive, MatrixRoundTripThroughFloat32) {
  std::mt19937_64 rng(3);
  const Matrix m = testing::random_matrix(rng, 3, 5);
  TensorArchive a;
  a.put("m", m);
  const Matrix back = a.matrix("m");
  ASSERT_EQ(back.rows(), 3);
  ASSERT_EQ(back.cols(), 5);
  EXPECT_LT((back - m).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(TensorArchive, FileRoundTrip) {
  testing::TempDir dir("archive");
  TensorArchive a;
  a.put("x", Tensor{{2, 2}, {1.f, 2.f, 3.f, 4.f}});
  a.save(dir / "x.wsa");
  EXPECT_EQ(TensorArchive::load(dir / "x.wsa"), a);
}

TEST(TensorArchive, RejectsTruncatedInput) {
  TensorArchive a;
  a.put("x", Tensor{{3}, {1.f, 2.f, 3.f}});
  const std::string bytes = a.serialize();
  EXPECT_THROW(TensorArchive::deserialize(std::string_view(bytes).substr(0, bytes.size() - 1)), DataError);
}

TEST(TensorArchive, RejectsUnknownDtype) {
  TensorArchive a;
  a.put("x", Tensor{{1}, {1.f}});
  std::string bytes = a.serialize();
  bytes[5] = '\x07';
  EXPECT_THROW(TensorArchive::deserialize(bytes), DataError);
}

TEST(TensorArchive, MissingNameThrows) {
  TensorArchive a;
  EXPECT_FALSE(a.contains("nope"));
  EXPECT_THROW(a.at("nope"), DataError);
}

TEST(TensorArchive, LoadMissingFileThrows) {
  EXPECT_THROW(TensorArchive::load("/nonexistent/dir/x.wsa"), DataError);
}

}  // namespace
}  // namespace wsseg
