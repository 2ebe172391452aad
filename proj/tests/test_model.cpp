#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vmamba/model.hpp"

using namespace vmamba;
using namespace vmamba::model;

namespace {

Tensor64 random_clip(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Tensor64 clip(cfg.clip_shape());
  for (auto& v : clip.data()) v = dist(rng);
  return clip;
}

Tensor64 random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Tensor64 x({n, d});
  for (auto& v : x.data()) v = dist(rng);
  return x;
}

/// Toy model with a non-trivial backward path: class token, smaller input.
ModelConfig small_config() {
  auto cfg = toy_config();
  cfg.depth = 1;
  cfg.dim = 16;
  cfg.state_size = 4;
  cfg.frames = 4;
  cfg.height = 16;
  cfg.width = 16;
  return cfg;
}

Tensor64 run_block(const ad::ParameterSet<double>& w, const Tensor64& x, const order::ScanPermutation& perm) {
  ad::Tape<double> tape;
  auto vars = ad::bind_parameters(tape, w, false);
  vars.emplace("x", tape.constant(x));
  return encoder_block(vars.at("x"), vars, "blocks.0", perm, ssm::Discretization::kExactZoh).value();
}

}  // namespace

TEST(ModelConfig, TokenCounts) {
  EXPECT_EQ(toy_config().video_tokens(), 64u);
  EXPECT_EQ(toy_config().sequence_length(), 64u);
  const auto p16 = reference_config(16, 384);
  EXPECT_EQ(p16.video_tokens(), 1568u);
  EXPECT_EQ(p16.sequence_length(), 1569u);
  EXPECT_EQ(reference_config(32, 384).sequence_length(), 3137u);
}

TEST(ModelConfig, DtRankDefaultsToCeilDimOver16) {
  ModelConfig cfg;
  cfg.dim = 384;
  EXPECT_EQ(cfg.resolved_dt_rank(), 24u);
  cfg.dim = 40;
  EXPECT_EQ(cfg.resolved_dt_rank(), 3u);
  cfg.dt_rank = 7;
  EXPECT_EQ(cfg.resolved_dt_rank(), 7u);
}

TEST(ModelConfig, ValidationRejectsBadValues) {
  auto cfg = toy_config();
  cfg.depth = 0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = toy_config();
  cfg.pe_mode = video::PeMode::kSinusoid;
  cfg.dim = 31;
  EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(InitWeights, MatchesDeclaredShapes) {
  const auto cfg = small_config();
  const auto shapes = parameter_shapes(cfg);
  const auto w = init_weights<double>(cfg, 0);
  ASSERT_EQ(w.size(), shapes.size());
  for (const auto& [name, shape] : shapes) {
    ASSERT_TRUE(w.count(name)) << name;
    EXPECT_EQ(w.at(name).shape(), shape) << name;
  }
  EXPECT_EQ(w.at("blocks.0.fwd.w_dt_down").shape(), (Shape{32, 1}));
  EXPECT_FALSE(w.count("cls_token"));
}

TEST(InitWeights, SeededAndStateMatrixNegative) {
  const auto cfg = small_config();
  const auto a = init_weights<double>(cfg, 5), b = init_weights<double>(cfg, 5), c = init_weights<double>(cfg, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.at("blocks.0.in_proj"), c.at("blocks.0.in_proj"));
  for (double v : a.at("blocks.0.fwd.a_log").data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, LogitShapeAndDeterminism) {
  const auto cfg = small_config();
  const auto w = init_weights<double>(cfg, 1);
  const auto clip = random_clip(cfg, 2);
  const auto l1 = predict_logits(clip, cfg, w), l2 = predict_logits(clip, cfg, w);
  EXPECT_EQ(l1.shape(), (Shape{1, 4}));
  EXPECT_TRUE(l1.all_finite());
  EXPECT_EQ(l1, l2);
}

TEST(Forward, WrongClipShapeRejected) {
  const auto cfg = small_config();
  const auto w = init_weights<double>(cfg, 1);
  EXPECT_THROW(predict_logits(Tensor64({1, 4, 16, 8}), cfg, w), ShapeError);
}

TEST(Forward, ClassTokenVariantRuns) {
  auto cfg = small_config();
  cfg.class_token = true;
  const auto w = init_weights<double>(cfg, 1);
  EXPECT_TRUE(w.count("cls_token"));
  EXPECT_EQ(sequence_backward_order(cfg).size(), cfg.video_tokens() + 1);
  EXPECT_TRUE(predict_logits(random_clip(cfg, 3), cfg, w).all_finite());
}

TEST(EncoderBlock, ZeroOutputProjectionIsIdentity) {
  const auto cfg = small_config();
  auto w = init_weights<double>(cfg, 4);
  w.at("blocks.0.out_proj") = Tensor64(w.at("blocks.0.out_proj").shape(), 0.0);
  const auto x = random_rows(cfg.video_tokens(), cfg.dim, 5);
  EXPECT_EQ(run_block(w, x, sequence_backward_order(cfg)), x);
}

TEST(StSsm, SilencedBackwardPathEqualsForwardOnly) {
  const auto cfg = small_config();
  auto w = init_weights<double>(cfg, 6);
  w.at("blocks.0.bwd.w_c") = Tensor64(w.at("blocks.0.bwd.w_c").shape(), 0.0);
  w.at("blocks.0.bwd.d") = Tensor64(w.at("blocks.0.bwd.d").shape(), 0.0);
  const auto x = random_rows(cfg.video_tokens(), cfg.inner_dim(), 7);

  ad::Tape<double> tape;
  auto vars = ad::bind_parameters(tape, w, false);
  auto xv = tape.constant(x);
  const auto both = st_ssm(xv, vars, "blocks.0", sequence_backward_order(cfg), ssm::Discretization::kExactZoh);
  const auto fwd = selective_direction(xv, vars, "blocks.0.fwd", ssm::Discretization::kExactZoh);
  EXPECT_EQ(both.value(), fwd.value());
}

TEST(BackwardStrategy, SingleFrameGridMakesSpatialAndStIdentical) {
  auto cfg = small_config();
  cfg.frames = cfg.tubelet.st;
  ASSERT_EQ(cfg.grid().nt, 1u);
  const auto w = init_weights<double>(cfg, 8);
  const auto clip = random_clip(cfg, 9);
  auto spatial = cfg;
  spatial.backward = order::BackwardStrategy::kSpatial;
  EXPECT_EQ(predict_logits(clip, cfg, w), predict_logits(clip, spatial, w));
}

TEST(BackwardStrategy, StrategiesDifferOnMultiFrameGrids) {
  const auto cfg = small_config();
  const auto w = init_weights<double>(cfg, 10);
  const auto clip = random_clip(cfg, 11);
  auto spatial = cfg;
  spatial.backward = order::BackwardStrategy::kSpatial;
  EXPECT_GT(max_abs_diff(predict_logits(clip, cfg, w), predict_logits(clip, spatial, w)), 0.0);
}

TEST(DeltaMaps, ShapeAndPositivity) {
  const auto cfg = toy_config();
  const auto w = init_weights<double>(cfg, 12);
  const auto maps = extract_delta_maps(random_clip(cfg, 13), cfg, w);
  EXPECT_EQ(maps.shape(), (Shape{2, 4, 4, 4}));
  for (double v : maps.data()) EXPECT_GT(v, 0.0);
}

TEST(DeltaMaps, ConstantStepWhenProjectionIsZero) {
  const auto cfg = small_config();
  auto w = init_weights<double>(cfg, 14);
  w.at("blocks.0.fwd.w_dt_up") = Tensor64(w.at("blocks.0.fwd.w_dt_up").shape(), 0.0);
  w.at("blocks.0.fwd.b_dt") = Tensor64(w.at("blocks.0.fwd.b_dt").shape(), 0.3);
  const auto maps = extract_delta_maps(random_clip(cfg, 15), cfg, w);
  const double expected = std::log1p(std::exp(0.3));
  for (double v : maps.data()) EXPECT_NEAR(v, expected, 1e-14);
}

TEST(DeltaMaps, FirstLayerIsCausalInScanOrder) {
  const auto cfg = toy_config();
  const auto w = init_weights<double>(cfg, 16);
  auto clip = random_clip(cfg, 17);
  const auto before = extract_delta_maps(clip, cfg, w);
  // Perturb the last tubelet slice only.
  for (std::size_t t = cfg.frames - cfg.tubelet.st; t < cfg.frames; ++t)
    for (std::size_t i = 0; i < cfg.height; ++i)
      for (std::size_t j = 0; j < cfg.width; ++j) clip[clip.flat_index({0, t, i, j})] += 0.5;
  const auto after = extract_delta_maps(clip, cfg, w);
  const auto g = cfg.grid();
  for (std::size_t t = 0; t + 1 < g.nt; ++t)
    for (std::size_t i = 0; i < g.nh; ++i)
      for (std::size_t j = 0; j < g.nw; ++j) ASSERT_EQ(after[after.flat_index({0, t, i, j})], before[before.flat_index({0, t, i, j})]);
  EXPECT_GT(max_abs_diff(after, before), 0.0);
}

TEST(Discretization, SimplifiedModeStaysClose) {
  auto cfg = small_config();
  const auto w = init_weights<double>(cfg, 18);
  const auto clip = random_clip(cfg, 19);
  const auto exact = predict_logits(clip, cfg, w);
  cfg.discretization = ssm::Discretization::kSimplified;
  const auto simple = predict_logits(clip, cfg, w);
  EXPECT_TRUE(simple.all_finite());
  EXPECT_LT(max_abs_diff(exact, simple), 0.5);
}
