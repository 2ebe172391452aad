#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <span>

#include "vmamba/scan_order.hpp"

using namespace vmamba;
using namespace vmamba::order;

namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

/// 1-based to 0-based.
std::vector<std::size_t> zero_based(std::vector<std::size_t> v) {
  for (auto& x : v) --x;
  return v;
}

std::vector<TubeletGrid> all_small_grids() {
  std::vector<TubeletGrid> grids;
  for (std::size_t t = 1; t <= 4; ++t)
    for (std::size_t h = 1; h <= 4; ++h)
      for (std::size_t w = 1; w <= 4; ++w) grids.push_back({t, h, w});
  return grids;
}

constexpr BackwardStrategy kStrategies[] = {BackwardStrategy::kSpatioTemporal, BackwardStrategy::kSpatial,
                                            BackwardStrategy::kTemporal};

}  // namespace

TEST(ForwardOrder, Identity) {
  EXPECT_EQ(forward_order({2, 2, 2}).order(), iota(8));
  EXPECT_EQ(forward_order({1, 1, 1}).order(), iota(1));
  const auto big = forward_order({16, 14, 14});
  EXPECT_EQ(big.size(), 3136u);
  EXPECT_TRUE(big.is_identity());
}

TEST(ForwardOrder, CanonicalIndex) {
  const TubeletGrid g{3, 4, 5};
  EXPECT_EQ(g.index(2, 1, 3), (2u * 4 + 1) * 5 + 3);
  EXPECT_THROW((TubeletGrid{0, 1, 1}.validate()), ContractError);
}

TEST(BackwardOrder, GoldensOnTwoByTwoByTwo) {
  const TubeletGrid g{2, 2, 2};
  EXPECT_EQ(backward_order(g, BackwardStrategy::kSpatioTemporal).order(),
            (std::vector<std::size_t>{7, 6, 5, 4, 3, 2, 1, 0}));
  EXPECT_EQ(backward_order(g, BackwardStrategy::kSpatial).order(), (std::vector<std::size_t>{3, 2, 1, 0, 7, 6, 5, 4}));
  EXPECT_EQ(backward_order(g, BackwardStrategy::kTemporal).order(),
            (std::vector<std::size_t>{4, 5, 6, 7, 0, 1, 2, 3}));
}

TEST(BackwardOrder, StrategyNames) {
  for (auto s : kStrategies) EXPECT_EQ(parse_backward_strategy(to_string(s)), s);
  EXPECT_EQ(to_string(BackwardStrategy::kSpatioTemporal), "st-reverse");
  EXPECT_EQ(to_string(BackwardStrategy::kSpatial), "spatial-reverse");
  EXPECT_EQ(to_string(BackwardStrategy::kTemporal), "temporal-reverse");
  EXPECT_THROW(parse_backward_strategy("diagonal"), ContractError);
}

TEST(BackwardOrderProperty, BijectionWithConsistentInverse) {
  for (const auto& g : all_small_grids())
    for (auto s : kStrategies) {
      const auto p = backward_order(g, s);
      auto sorted = p.order();
      std::sort(sorted.begin(), sorted.end());
      ASSERT_EQ(sorted, iota(g.tokens()));
      for (std::size_t i = 0; i < p.size(); ++i) ASSERT_EQ(p.inverse()[p.order()[i]], i);
    }
}

TEST(BackwardOrderProperty, Involutions) {
  for (const auto& g : all_small_grids())
    for (auto s : kStrategies) {
      const auto p = backward_order(g, s);
      EXPECT_TRUE(p.after(p).is_identity());
      EXPECT_EQ(p.inverted(), p);
    }
}

TEST(BackwardOrderProperty, SpatioTemporalIsTemporalAfterSpatial) {
  for (const auto& g : all_small_grids()) {
    const auto st = backward_order(g, BackwardStrategy::kSpatioTemporal);
    const auto sp = backward_order(g, BackwardStrategy::kSpatial);
    const auto te = backward_order(g, BackwardStrategy::kTemporal);
    EXPECT_EQ(te.after(sp), st);
    EXPECT_EQ(sp.after(te), st);
  }
}

TEST(BackwardOrderProperty, SingleFrameRules) {
  for (std::size_t h = 1; h <= 4; ++h)
    for (std::size_t w = 1; w <= 4; ++w) {
      const TubeletGrid g{1, h, w};
      EXPECT_EQ(backward_order(g, BackwardStrategy::kSpatial), backward_order(g, BackwardStrategy::kSpatioTemporal));
      EXPECT_TRUE(backward_order(g, BackwardStrategy::kTemporal).is_identity());
    }
}

TEST(ScanPermutation, RejectsNonBijection) {
  EXPECT_THROW(ScanPermutation({0, 0, 1}), ContractError);
  EXPECT_THROW(ScanPermutation({0, 3, 1}), ContractError);
}

TEST(ScanPermutation, CompositionOrder) {
  const ScanPermutation first({1, 2, 0}), second({0, 2, 1});
  const std::vector<int> x{10, 20, 30};
  const auto once = apply_permutation(std::span<const int>(x), first);
  const auto two_step = apply_permutation(std::span<const int>(once), second);
  EXPECT_EQ(apply_permutation(std::span<const int>(x), second.after(first)), two_step);
}

TEST(ClassToken, ForwardFirstBackwardLast) {
  const auto video = backward_order({2, 1, 2}, BackwardStrategy::kSpatioTemporal);
  EXPECT_EQ(forward_with_class_token(forward_order({2, 1, 2})).order(), iota(5));
  EXPECT_EQ(backward_with_class_token(video).order(), (std::vector<std::size_t>{4, 3, 2, 1, 0}));
  const auto spatial = backward_with_class_token(backward_order({2, 1, 2}, BackwardStrategy::kSpatial));
  EXPECT_EQ(spatial.order(), (std::vector<std::size_t>{2, 1, 4, 3, 0}));
}

TEST(ApplyPermutation, IdentityAndReverse) {
  const std::vector<double> x{1.5, -2, 3, 4, 5.5};
  const std::span<const double> xs(x);
  EXPECT_EQ(apply_permutation(xs, ScanPermutation::identity(5)), x);
  const ScanPermutation rev({4, 3, 2, 1, 0});
  const auto once = apply_permutation(xs, rev);
  EXPECT_EQ(apply_permutation(std::span<const double>(once), rev), x);
  EXPECT_THROW(apply_permutation(xs, ScanPermutation::identity(4)), ShapeError);
}

TEST(ApplyPermutationProperty, InverseRestoresBitwise) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial;
    auto order = iota(n);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const ScanPermutation p(order);
    Tensor64 x({n, 3});
    for (auto& v : x.data()) v = dist(rng);
    const auto y = apply_permutation(x, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 3; ++j) ASSERT_EQ(y.at(i, j), x.at(order[i], j));
    EXPECT_EQ(apply_permutation(y, p.inverted()), x);
  }
}

TEST(FrameReorder, ReferenceSequencesForEightFrames) {
  EXPECT_EQ(frame_reorder(8, FrameStrategy::kInterleaved), zero_based({1, 8, 2, 7, 3, 6, 4, 5}));
  EXPECT_EQ(frame_reorder(8, FrameStrategy::kPairwise), zero_based({1, 2, 7, 8, 5, 6, 3, 4}));
  EXPECT_EQ(frame_reorder(8, FrameStrategy::kBlockwise), zero_based({5, 6, 7, 8, 1, 2, 3, 4}));
  EXPECT_EQ(frame_reorder(8, FrameStrategy::kSequential), iota(8));
}

TEST(FrameReorder, Errors) {
  EXPECT_THROW(frame_reorder(7, FrameStrategy::kPairwise), ContractError);
  EXPECT_THROW(frame_reorder(5, FrameStrategy::kBlockwise), ContractError);
  EXPECT_THROW(frame_reorder(1, FrameStrategy::kSequential), ContractError);
  EXPECT_THROW(parse_frame_strategy("random"), ContractError);
}

TEST(FrameReorderProperty, SequentialIsIdentityAndAllArePermutations) {
  for (std::size_t t = 2; t <= 32; ++t) {
    EXPECT_EQ(frame_reorder(t, FrameStrategy::kSequential), iota(t));
    for (auto s : {FrameStrategy::kInterleaved, FrameStrategy::kPairwise, FrameStrategy::kBlockwise}) {
      if (t % 2 == 1 && s != FrameStrategy::kInterleaved) continue;
      auto f = frame_reorder(t, s);
      std::sort(f.begin(), f.end());
      EXPECT_EQ(f, iota(t)) << to_string(s) << " T=" << t;
    }
  }
}

TEST(FrameReorder, PairwiseGeneralization) {
  // pairs (0,1), (T-2,T-1), (T-4,T-3), ... then the remaining low pairs
  EXPECT_EQ(frame_reorder(4, FrameStrategy::kPairwise), (std::vector<std::size_t>{0, 1, 2, 3}));
  const auto f12 = frame_reorder(12, FrameStrategy::kPairwise);
  EXPECT_EQ((std::vector<std::size_t>(f12.begin(), f12.begin() + 4)), (std::vector<std::size_t>{0, 1, 10, 11}));
}
