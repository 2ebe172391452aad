#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "vmamba/checks/oracles.hpp"
#include "vmamba/serialize.hpp"
#include "vmamba/tensor.hpp"

using namespace vmamba;

namespace {

Tensor64 random64(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Tensor64 t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor random32(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<float> dist;
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

TEST(TensorNew, ZeroFill) {
  Tensor t({2, 3}, 0.0f);
  EXPECT_EQ(t.shape(), (Shape{2, 3}));
  ASSERT_EQ(t.size(), 6u);
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(TensorNew, SingleElementBuffer) {
  Tensor t({1}, std::vector<float>{7.0f});
  EXPECT_EQ(t.shape(), (Shape{1}));
  EXPECT_EQ(t[0], 7.0f);
}

TEST(TensorNew, BufferLengthMismatchIsShapeError) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(TensorNew, ZeroExtentAndEmptyShapeRejected) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
}

TEST(TensorLayout, RowMajorStrides) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.strides(), (Shape{12, 4, 1}));
  EXPECT_EQ(t.flat_index({1, 2, 3}), 1u * 12 + 2 * 4 + 3);
  EXPECT_THROW(t.flat_index({2, 0, 0}), ShapeError);
  EXPECT_THROW(t.flat_index({0, 0}), ShapeError);
}

TEST(TensorLayout, ReshapeKeepsData) {
  Tensor64 t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.storage(), t.storage());
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Matmul, IdentityIsNeutral) {
  std::mt19937_64 rng(1);
  const auto x = random64({3, 4}, rng);
  EXPECT_EQ(matmul(Tensor64::identity(3), x), x);
}

TEST(Matmul, HandExample) {
  Tensor64 a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor64 b({2, 1}, std::vector<double>{1, 1});
  EXPECT_EQ(matmul(a, b), Tensor64({2, 1}, std::vector<double>{3, 7}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random64({5, 7}, rng), b = random64({7, 3}, rng);
    EXPECT_LE(max_abs_diff(matmul(a, b), oracle::matmul(a, b)), 1e-12);
  }
}

TEST(Matmul, InnerMismatchIsShapeError) {
  EXPECT_THROW(matmul(Tensor64({2, 3}), Tensor64({2, 3})), ShapeError);
}

TEST(Matmul, TransposedVariantsAgree) {
  std::mt19937_64 rng(3);
  const auto a = random64({4, 6}, rng), b = random64({5, 6}, rng), c = random64({4, 5}, rng);
  EXPECT_LE(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))), 1e-12);
  EXPECT_LE(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)), 1e-12);
}

TEST(MatmulProperty, Associativity) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> ext(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = ext(rng), k = ext(rng), l = ext(rng), n = ext(rng);
    const auto a = random64({m, k}, rng), b = random64({k, l}, rng), c = random64({l, n}, rng);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-10);
  }
}

TEST(Elementwise, Basics) {
  Tensor64 a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor64 b({2, 2}, std::vector<double>{4, 3, 2, 1});
  EXPECT_EQ(add(a, b), Tensor64({2, 2}, 5.0));
  EXPECT_EQ(sub(a, b), Tensor64({2, 2}, std::vector<double>{-3, -1, 1, 3}));
  EXPECT_EQ(hadamard(a, b), Tensor64({2, 2}, std::vector<double>{4, 6, 6, 4}));
  EXPECT_EQ(scale(a, 2.0), Tensor64({2, 2}, std::vector<double>{2, 4, 6, 8}));
  EXPECT_EQ(sum(a), 10.0);
  EXPECT_EQ(max_abs(sub(a, b)), 3.0);
  EXPECT_THROW(add(a, Tensor64({4})), ShapeError);
}

TEST(ElementwiseProperty, FiniteInputsGiveFiniteOutputs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random64({3, 4}, rng), b = random64({4, 2}, rng), c = random64({3, 4}, rng);
    EXPECT_TRUE(matmul(a, b).all_finite());
    EXPECT_TRUE(add(a, c).all_finite());
    EXPECT_TRUE(hadamard(a, c).all_finite());
    EXPECT_TRUE(transpose(a).all_finite());
  }
}

TEST(Vmtb, HeaderSizeForRankTwo) {
  EXPECT_EQ(vmtb_header_size(2), 29u);
  const auto bytes = serialize(Tensor({2, 3}));
  EXPECT_EQ(bytes.size(), 29u + 6 * sizeof(float));
}

TEST(Vmtb, HeaderLayout) {
  const auto bytes = serialize(Tensor64({2, 3}, 1.5));
  EXPECT_EQ(std::memcmp(bytes.data(), "VMTB", 4), 0);
  EXPECT_EQ(static_cast<int>(bytes[4]), 1);  // version, little-endian
  EXPECT_EQ(static_cast<int>(bytes[5]), 0);
  EXPECT_EQ(static_cast<int>(bytes[8]), 1);  // dtype f64
  EXPECT_EQ(static_cast<int>(bytes[9]), 2);  // rank
  EXPECT_EQ(static_cast<int>(bytes[13]), 2);
  EXPECT_EQ(static_cast<int>(bytes[21]), 3);
  double first;
  std::memcpy(&first, bytes.data() + 29, sizeof first);
  EXPECT_EQ(first, 1.5);
}

TEST(VmtbProperty, RoundTripIsBitExactForBothDtypes) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> ext(1, 5);
  for (int trial = 0; trial < 30; ++trial) {
    Shape shape(1 + trial % 4);
    for (auto& e : shape) e = ext(rng);
    const auto t32 = random32(shape, rng);
    const auto t64 = random64(shape, rng);
    const auto back32 = deserialize_as<float>(serialize(t32));
    const auto back64 = deserialize_as<double>(serialize(t64));
    EXPECT_EQ(back32, t32);
    EXPECT_EQ(back64, t64);
    EXPECT_EQ(std::memcmp(back64.data().data(), t64.data().data(), t64.size() * sizeof(double)), 0);
  }
}

TEST(VmtbProperty, SpecialValuesRoundTrip) {
  Tensor64 t({4}, std::vector<double>{-0.0, std::numeric_limits<double>::denorm_min(),
                                      std::numeric_limits<double>::max(), 1e-300});
  const auto back = deserialize_as<double>(serialize(t));
  EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), 4 * sizeof(double)), 0);
}

TEST(Vmtb, MalformedStreamsRejected) {
  auto good = serialize(Tensor({2, 2}, 1.0f));

  auto bad_magic = good;
  bad_magic[0] = std::byte{'X'};
  EXPECT_THROW(deserialize(bad_magic), FormatError);

  auto bad_version = good;
  bad_version[4] = std::byte{2};
  EXPECT_THROW(deserialize(bad_version), FormatError);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(deserialize(truncated), FormatError);

  auto rank_zero = good;
  rank_zero[9] = std::byte{0};
  EXPECT_THROW(deserialize(rank_zero), FormatError);

  auto bad_dtype = good;
  bad_dtype[8] = std::byte{7};
  EXPECT_THROW(deserialize(bad_dtype), FormatError);

  EXPECT_THROW(deserialize_as<double>(good), FormatError);
}

TEST(Vmtb, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "vmamba_tensor_roundtrip.vmtb";
  std::mt19937_64 rng(7);
  const auto t = random32({3, 2, 2}, rng);
  save_tensor(path, t);
  EXPECT_EQ(load_tensor_as<float>(path), t);
  EXPECT_EQ(load_tensor_converting<double>(path), t.cast<double>());
  std::filesystem::remove(path);
}
