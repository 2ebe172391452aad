#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "vmamba/autodiff.hpp"
#include "vmamba/model.hpp"
#include "vmamba/train.hpp"

using namespace vmamba;
using namespace vmamba::train;

namespace {

model::ModelConfig tiny_model() {
  auto cfg = model::toy_config();
  cfg.depth = 1;
  cfg.dim = 16;
  cfg.state_size = 4;
  return cfg;
}

Tensor zeros_noise(std::size_t frames, std::size_t size) { return Tensor({frames, size, size}, 0.0f); }

}  // namespace

TEST(Dataset, SeededAndBalanced) {
  const auto a = gen_dataset(40, 8, 32, 0.1, 3), b = gen_dataset(40, 8, 32, 0.1, 3), c = gen_dataset(40, 8, 32, 0.1, 4);
  ASSERT_EQ(a.size(), 40u);
  std::size_t counts[kNumDirections] = {};
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].clip, b[i].clip);
    EXPECT_EQ(a[i].label, i % kNumDirections);
    EXPECT_EQ(a[i].clip.shape(), (Shape{1, 8, 32, 32}));
    ++counts[a[i].label];
  }
  for (auto n : counts) EXPECT_EQ(n, 10u);
  EXPECT_NE(a[0].clip, c[0].clip);
}

TEST(Dataset, PixelsStayInUnitRange) {
  for (const auto& s : gen_dataset(8, 8, 32, 0.5, 1))
    for (float v : s.clip.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
}

TEST(Dataset, SplitsUseDistinctSeeds) {
  DatasetConfig cfg;
  cfg.train_samples = 4;
  cfg.eval_samples = 4;
  const auto s = make_splits(cfg);
  const auto eval = gen_dataset(4, cfg.frames, cfg.size, cfg.noise_std, cfg.seed + 1, cfg.bar);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.eval[i].clip, eval[i].clip);
    EXPECT_NE(s.train[i].clip, s.eval[i].clip);
  }
}

TEST(Dataset, ImpossibleGeometryRejected) {
  EXPECT_THROW(gen_dataset(4, 8, 8, 0.1, 0, 4), ContractError);
  EXPECT_THROW(gen_dataset(4, 3, 32, 0.1, 0), ContractError);
  EXPECT_THROW(gen_dataset(4, 8, 32, -1.0, 0), ContractError);
}

TEST(RenderClip, BarMovesOnePixelPerFrame) {
  const auto clip = render_clip(Direction::kRight, 2, 3, 2, zeros_noise(4, 16), 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(clip[clip.flat_index({0, t, 2, 3 + t})], 1.0f);
    EXPECT_EQ(clip[clip.flat_index({0, t, 3, 4 + t})], 1.0f);
    EXPECT_FLOAT_EQ(clip[clip.flat_index({0, t, 2, 5 + t})], static_cast<float>(kBackgroundLevel));
    if (t > 0) EXPECT_FLOAT_EQ(clip[clip.flat_index({0, t, 2, 2 + t})], static_cast<float>(kBackgroundLevel));
  }
  EXPECT_THROW(render_clip(Direction::kUp, 1, 0, 2, zeros_noise(4, 16), 0.0), ContractError);
}

TEST(RenderClipProperty, TimeReversalSwapsDirection) {
  const std::size_t T = 6, S = 16, bar = 3;
  for (auto dir : {Direction::kUp, Direction::kDown, Direction::kLeft, Direction::kRight}) {
    const std::size_t r0 = 7, c0 = 6;
    const auto clip = render_clip(dir, r0, c0, bar, zeros_noise(T, S), 0.0);
    std::size_t r1 = r0, c1 = c0;
    if (dir == Direction::kUp) r1 -= T - 1;
    if (dir == Direction::kDown) r1 += T - 1;
    if (dir == Direction::kLeft) c1 -= T - 1;
    if (dir == Direction::kRight) c1 += T - 1;
    EXPECT_EQ(reverse_frames(clip), render_clip(reversed(dir), r1, c1, bar, zeros_noise(T, S), 0.0)) << to_string(dir);
    EXPECT_EQ(reversed(reversed(dir)), dir);
  }
}

TEST(ReorderFrames, GathersSourceFrames) {
  Tensor64 clip({1, 3, 1, 1}, std::vector<double>{10, 20, 30});
  EXPECT_EQ(reorder_frames(clip, {2, 0, 1}), Tensor64({1, 3, 1, 1}, std::vector<double>{30, 10, 20}));
  EXPECT_EQ(reverse_frames(clip), Tensor64({1, 3, 1, 1}, std::vector<double>{30, 20, 10}));
  EXPECT_THROW(reorder_frames(clip, {0, 1}), ShapeError);
  EXPECT_THROW(reorder_frames(clip, {0, 1, 3}), ShapeError);
}

TEST(SmoothedCe, ReferenceValues) {
  const std::vector<double> uniform(4, 0.7);
  EXPECT_NEAR(smoothed_ce(uniform, 2, 0.1), std::log(4.0), 1e-15);
  EXPECT_NEAR(smoothed_ce(uniform, 0, 0.0), std::log(4.0), 1e-15);
  const std::vector<double> logits{2.0, 0.0, -1.0};
  const double lse = std::log(std::exp(2.0) + 1.0 + std::exp(-1.0));
  EXPECT_NEAR(smoothed_ce(logits, 0, 0.0), lse - 2.0, 1e-15);
  EXPECT_THROW(smoothed_ce(logits, 3, 0.1), ContractError);
  EXPECT_THROW(smoothed_ce(logits, 0, 1.0), ContractError);
}

TEST(SmoothedCe, FloorIsAttainedAtTheTarget) {
  const double eps = 0.1, k = 4;
  EXPECT_NEAR(smoothed_ce_floor(4, eps), 0.3488, 5e-5);
  EXPECT_EQ(smoothed_ce_floor(4, 0.0), 0.0);
  // logits = log q reproduce the floor
  const double on = 1 - eps + eps / k, off = eps / k;
  const std::vector<double> logits{std::log(off), std::log(on), std::log(off), std::log(off)};
  EXPECT_NEAR(smoothed_ce(logits, 1, eps), smoothed_ce_floor(4, eps), 1e-14);
}

TEST(SmoothedCe, TapeGradientIsSoftmaxMinusTarget) {
  const std::vector<double> raw{0.3, -1.2, 2.0, 0.5};
  ad::Tape<double> tape;
  auto logits = tape.leaf("z", Tensor64({1, 4}, raw));
  const auto loss = ad::smoothed_cross_entropy(logits, 2, 0.1);
  EXPECT_NEAR(loss.value()[0], smoothed_ce(raw, 2, 0.1), 1e-14);
  const auto g = tape.backward(loss).at("z");
  double z = 0;
  for (double r : raw) z += std::exp(r);
  for (std::size_t c = 0; c < 4; ++c) {
    const double q = (c == 2 ? 0.9 : 0.0) + 0.025;
    EXPECT_NEAR(g[c], std::exp(raw[c]) / z - q, 1e-6);
  }
}

TEST(LrSchedule, WarmupThenCosine) {
  EXPECT_DOUBLE_EQ(lr_at(0, 100, 10, 1.0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(9, 100, 10, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(lr_at(10, 100, 10, 1.0), 1.0);
  EXPECT_NEAR(lr_at(55, 100, 10, 1.0), 0.5, 1e-15);
  EXPECT_NEAR(lr_at(100, 100, 10, 1.0), 0.0, 1e-15);
  for (std::size_t s = 10; s < 99; ++s) EXPECT_GE(lr_at(s, 100, 10, 1.0), lr_at(s + 1, 100, 10, 1.0));
}

TEST(AdamW, DecayExclusions) {
  EXPECT_TRUE(decays("blocks.0.in_proj", {32, 64}));
  EXPECT_TRUE(decays("tokenizer.weight", {32, 1, 2, 8, 8}));
  EXPECT_FALSE(decays("blocks.0.norm.weight", {32}));
  EXPECT_FALSE(decays("pos_embed", {64, 32}));
  EXPECT_FALSE(decays("cls_token", {1, 32}));
  EXPECT_FALSE(decays("blocks.1.bwd.a_log", {64, 8}));
}

TEST(AdamW, FirstStepMovesByLrTimesSign) {
  TrainConfig tc;
  tc.weight_decay = 0.0;
  ad::ParameterSet<float> p{{"w", Tensor({2, 2}, std::vector<float>{1, 1, 1, 1})}};
  ad::GradientSet<float> g{{"w", Tensor({2, 2}, std::vector<float>{3, -2, 0.5f, -1e-3f})}};
  AdamW opt(tc, p);
  opt.step(p, g, 0.01);
  EXPECT_NEAR(p.at("w")[0], 0.99f, 1e-6);
  EXPECT_NEAR(p.at("w")[1], 1.01f, 1e-6);
  EXPECT_NEAR(p.at("w")[2], 0.99f, 1e-6);
  EXPECT_NEAR(p.at("w")[3], 1.01f, 1e-4);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, DecayShrinksOnlyMatrices) {
  TrainConfig tc;
  tc.weight_decay = 0.5;
  ad::ParameterSet<float> p{{"m", Tensor({1, 2}, 2.0f)}, {"v", Tensor({2}, 2.0f)}};
  ad::GradientSet<float> g{{"m", Tensor({1, 2}, 0.0f)}, {"v", Tensor({2}, 0.0f)}};
  AdamW opt(tc, p);
  opt.step(p, g, 0.1);
  EXPECT_NEAR(p.at("m")[0], 2.0f - 0.1f * 0.5f * 2.0f, 1e-6);
  EXPECT_EQ(p.at("v")[0], 2.0f);
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  EXPECT_NO_THROW(tc.validate());
  tc.warmup_epochs = 40;
  EXPECT_THROW(tc.validate(), ContractError);
  tc = {};
  tc.lr = 0;
  EXPECT_THROW(tc.validate(), ContractError);
}

TEST(Training, OverfitsASingleBatch) {
  const auto cfg = tiny_model();
  const auto data = gen_dataset(4, 8, 32, 0.1, 9);
  std::vector<const SyntheticSample*> batch;
  for (const auto& s : data) batch.push_back(&s);
  auto w = model::init_weights<float>(cfg, 1);
  TrainConfig tc;
  tc.weight_decay = 0.0;
  AdamW opt(tc, w);
  double loss = 0;
  for (int step = 0; step < 200; ++step) {
    auto [l, g] = batch_gradient(cfg, w, batch, 0.1, 1);
    loss = l;
    opt.step(w, g, 3e-3);
  }
  EXPECT_LT(loss, smoothed_ce_floor(4, 0.1) + 0.05);
}

TEST(Training, GradientIndependentOfThreadCount) {
  const auto cfg = tiny_model();
  const auto data = gen_dataset(6, 8, 32, 0.1, 10);
  std::vector<const SyntheticSample*> batch;
  for (const auto& s : data) batch.push_back(&s);
  const auto w = model::init_weights<float>(cfg, 2);
  const auto one = batch_gradient(cfg, w, batch, 0.1, 1), three = batch_gradient(cfg, w, batch, 0.1, 3);
  EXPECT_EQ(one.first, three.first);
  EXPECT_EQ(one.second, three.second);
}

TEST(Training, BitwiseReproducible) {
  const auto cfg = tiny_model();
  const auto train_set = gen_dataset(16, 8, 32, 0.1, 11), eval_set = gen_dataset(8, 8, 32, 0.1, 12);
  TrainConfig tc;
  tc.epochs = 2;
  tc.warmup_epochs = 1;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  std::size_t callbacks = 0;
  const auto a = train::train(cfg, train_set, eval_set, tc, [&](const EpochMetrics&) { ++callbacks; });
  const auto b = train::train(cfg, train_set, eval_set, tc);
  EXPECT_EQ(callbacks, 2u);
  EXPECT_EQ(a.weights, b.weights);
  ASSERT_EQ(a.metrics.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.metrics[i].train_loss, b.metrics[i].train_loss);
    EXPECT_EQ(a.metrics[i].eval_acc, b.metrics[i].eval_acc);
  }
  EXPECT_EQ(metrics_csv(a.metrics), metrics_csv(b.metrics));
}

TEST(Evaluate, AccuracyIsAFractionOfSamples) {
  const auto cfg = tiny_model();
  const auto data = gen_dataset(8, 8, 32, 0.1, 13);
  const auto w = model::init_weights<float>(cfg, 3);
  for (auto s : {order::FrameStrategy::kSequential, order::FrameStrategy::kInterleaved}) {
    const double acc = evaluate(w, cfg, data, {.frames = s});
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    EXPECT_DOUBLE_EQ(acc * 8, std::round(acc * 8));
  }
}

TEST(DatasetIo, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "vmamba_dataset_test";
  std::filesystem::remove_all(dir);
  const auto data = gen_dataset(5, 8, 32, 0.1, 14);
  save_dataset(dir, data);
  const auto back = load_dataset(dir);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].clip, data[i].clip);
    EXPECT_EQ(back[i].label, data[i].label);
    EXPECT_EQ(back[i].seed, data[i].seed);
  }
  std::filesystem::remove_all(dir);
}
