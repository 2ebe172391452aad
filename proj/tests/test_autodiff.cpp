#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vmamba/autodiff.hpp"
#include "vmamba/gradcheck.hpp"
#include "vmamba/ssm.hpp"

using namespace vmamba;
using ad::Tape;
using ad::Var;

namespace {

Tensor64 normal(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Tensor64 t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor64 uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor64 t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto x = tape.leaf("x", Tensor64({2, 3, 2}, 0.7));
  const auto g = tape.backward(ad::sum(x));
  EXPECT_EQ(g.at("x"), Tensor64({2, 3, 2}, 1.0));
}

TEST(Backward, BilinearForm) {
  Tape<double> tape;
  auto w = tape.leaf("w", Tensor64({1, 2}, std::vector<double>{2, 3}));
  auto x = tape.constant(Tensor64({2, 1}, std::vector<double>{1, 1}));
  auto loss = ad::matmul(w, x);
  EXPECT_EQ(loss.value()[0], 5.0);
  const auto g = tape.backward(loss);
  EXPECT_EQ(g.at("w"), Tensor64({1, 2}, std::vector<double>{1, 1}));
}

TEST(Backward, LossMustBeScalar) {
  Tape<double> tape;
  auto x = tape.leaf("x", Tensor64({2}, 1.0));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, UnsupportedOpThrowsWhenReached) {
  Tape<double> tape;
  auto x = tape.leaf("x", Tensor64({1}, 2.0));
  auto y = tape.record("mystery", Tensor64({1}, 4.0), {x}, nullptr);
  EXPECT_THROW(tape.backward(ad::sum(y)), ad::UnsupportedOpError);
}

TEST(Backward, EveryLeafGetsAnEntry) {
  Tape<double> tape;
  auto a = tape.leaf("a", Tensor64({2}, 1.0));
  tape.leaf("unused", Tensor64({3}, 1.0));
  const auto g = tape.backward(ad::sum(a));
  ASSERT_TRUE(g.count("unused"));
  EXPECT_EQ(g.at("unused"), Tensor64({3}, 0.0));
}

TEST(Backward, ReusedValueAccumulates) {
  Tape<double> tape;
  auto x = tape.leaf("x", Tensor64({1}, 3.0));
  const auto g = tape.backward(ad::sum(ad::mul(x, x)));
  EXPECT_EQ(g.at("x")[0], 6.0);
}

TEST(FiniteDiff, QuadraticAtThree) {
  ad::ParameterSet<double> p{{"t", Tensor64({1}, 3.0)}};
  ad::GradientSet<double> g{{"t", Tensor64({1}, 6.0)}};
  ad::FdOptions opts;
  opts.eps = 1e-4;
  const auto rep =
      ad::finite_diff_check<double>([](const auto& q) { return q.at("t")[0] * q.at("t")[0]; }, p, g, opts);
  EXPECT_NEAR(rep.numeric_at_worst, 6.0, 1e-7);
  EXPECT_LE(rep.max_rel_error, 1e-7);
}

TEST(FiniteDiff, ConstantFunction) {
  ad::ParameterSet<double> p{{"t", Tensor64({3}, 1.0)}};
  ad::GradientSet<double> g{{"t", Tensor64({3}, 0.0)}};
  const auto rep = ad::finite_diff_check<double>([](const auto&) { return 4.0; }, p, g);
  EXPECT_EQ(rep.max_rel_error, 0.0);
}

TEST(FiniteDiff, NonFiniteEvaluationIsNumericError) {
  ad::ParameterSet<double> p{{"t", Tensor64({1}, 0.0)}};
  ad::GradientSet<double> g{{"t", Tensor64({1}, 0.0)}};
  EXPECT_THROW(ad::finite_diff_check<double>([](const auto& q) { return std::log(q.at("t")[0]); },
                                             p, g),
               NumericError);
}

TEST(FiniteDiff, EpsMustBePositive) {
  ad::ParameterSet<double> p{{"t", Tensor64({1}, 0.0)}};
  ad::FdOptions opts;
  opts.eps = 0;
  EXPECT_THROW(ad::finite_diff_check<double>([](const auto&) { return 0.0; }, p, p, opts), ContractError);
}

TEST(FiniteDiff, DetectsAWrongGradient) {
  ad::ParameterSet<double> p{{"t", Tensor64({1}, 3.0)}};
  ad::GradientSet<double> g{{"t", Tensor64({1}, 5.0)}};
  const auto rep = ad::finite_diff_check<double>([](const auto& q) { return q.at("t")[0] * q.at("t")[0]; }, p, g);
  EXPECT_GT(rep.max_rel_error, 0.1);
}

TEST(GradCheck, ThreeLayerMlp) {
  std::mt19937_64 rng(11);
  ad::ParameterSet<double> p{{"w1", normal({4, 6}, rng, 0.5)}, {"b1", normal({6}, rng, 0.1)},
                             {"w2", normal({6, 5}, rng, 0.5)}, {"b2", normal({5}, rng, 0.1)},
                             {"w3", normal({5, 3}, rng, 0.5)}, {"b3", normal({3}, rng, 0.1)}};
  const auto x = normal({2, 4}, rng);
  ad::FdOptions opts;
  opts.eps = 1e-6;
  const auto rep = ad::check_gradients<double>(
      [&x](Tape<double>& t, const auto& v) {
        auto h = ad::silu(ad::add_row_bias(ad::matmul(t.constant(x), v.at("w1")), v.at("b1")));
        h = ad::softplus(ad::add_row_bias(ad::matmul(h, v.at("w2")), v.at("b2")));
        auto z = ad::add_row_bias(ad::matmul(h, v.at("w3")), v.at("b3"));
        return ad::smoothed_cross_entropy(ad::slice_row(z, 1), 2, 0.1);
      },
      p, opts);
  EXPECT_LE(rep.max_rel_error, 1e-5) << rep.worst_param << "[" << rep.worst_index << "]";
}

TEST(GradCheck, SelectiveScanAllParameters) {
  std::mt19937_64 rng(12);
  const std::size_t len = 6, ch = 2, n = 4;
  ad::ParameterSet<double> p{{"x", normal({len, ch}, rng)},          {"delta", uniform({len, ch}, 0.05, 1.0, rng)},
                             {"a", uniform({ch, n}, -2.0, -0.3, rng)}, {"b", normal({len, n}, rng)},
                             {"c", normal({len, n}, rng)},            {"d", normal({ch}, rng)}};
  const auto rep = ad::check_gradients<double>(
      [](Tape<double>&, const auto& v) {
        return ad::sum(ssm::scan_op(v.at("x"), v.at("delta"), v.at("a"), v.at("b"), v.at("c"), v.at("d"),
                                    ssm::Discretization::kExactZoh));
      },
      p);
  EXPECT_LE(rep.max_rel_error, 1e-4) << rep.worst_param << "[" << rep.worst_index << "]";
}

TEST(GradCheckProperty, EachOpOnRandomShapes) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> ext(1, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = ext(rng), n = ext(rng), k = ext(rng);
    ad::ParameterSet<double> p{{"a", normal({m, n}, rng)}, {"b", normal({m, n}, rng)},
                               {"w", normal({n, k}, rng)}, {"g", normal({n}, rng)},
                               {"bias", normal({n}, rng)}, {"cw", normal({n, 3}, rng)}};
    auto weights = normal({m, k}, rng);
    const auto rep = ad::check_gradients<double>(
        [&](Tape<double>& t, const auto& v) {
          auto y = ad::mul(ad::silu(v.at("a")), ad::neg_exp(ad::scale(v.at("b"), 0.3)));
          y = ad::add(y, ad::layer_norm(v.at("b"), v.at("g"), v.at("bias")));
          y = ad::causal_conv1d(y, v.at("cw"), v.at("bias"));
          auto z = ad::matmul(ad::sub(y, ad::softplus(v.at("a"))), v.at("w"));
          return ad::add(ad::sum(ad::mul(z, t.constant(weights))), ad::sum(ad::mean_rows(y)));
        },
        p);
    EXPECT_LE(rep.max_rel_error, 1e-4) << "trial " << trial << ": " << rep.worst_param;
  }
}

TEST(BackwardProperty, DeterministicAcrossRuns) {
  std::mt19937_64 rng(14);
  const auto a = normal({4, 3}, rng), b = normal({3, 5}, rng);
  auto run = [&] {
    Tape<double> tape;
    auto va = tape.leaf("a", a), vb = tape.leaf("b", b);
    auto y = ad::silu(ad::matmul(va, vb));
    auto loss = ad::sum(ad::mul(y, ad::permute_rows(y, {3, 2, 1, 0})));
    return tape.backward(loss);
  };
  const auto g1 = run(), g2 = run();
  EXPECT_EQ(g1, g2);
}

TEST(ForwardProperty, ReplayIsBitwiseIdentical) {
  std::mt19937_64 rng(15);
  const auto x = normal({5, 4}, rng);
  auto run = [&] {
    Tape<double> tape;
    auto v = tape.leaf("x", x);
    return ad::layer_norm(ad::softplus(v), tape.constant(Tensor64({4}, 1.0)), tape.constant(Tensor64({4}, 0.0)))
        .value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Ops, PermuteConcatSliceShapes) {
  Tape<double> tape;
  auto a = tape.leaf("a", Tensor64({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6}));
  auto b = tape.leaf("b", Tensor64({1, 3}, 9.0));
  EXPECT_EQ(ad::permute_rows(a, {1, 0}).value(), Tensor64({2, 3}, std::vector<double>{4, 5, 6, 1, 2, 3}));
  EXPECT_EQ(ad::concat_rows(b, a).shape(), (Shape{3, 3}));
  EXPECT_EQ(ad::slice_row(a, 1).value(), Tensor64({1, 3}, std::vector<double>{4, 5, 6}));
  EXPECT_EQ(ad::mean_rows(a).value(), Tensor64({1, 3}, std::vector<double>{2.5, 3.5, 4.5}));
  EXPECT_THROW(ad::permute_rows(a, {0, 2}), ShapeError);
  EXPECT_THROW(ad::permute_rows(a, {0}), ShapeError);
}

TEST(Ops, CausalConvUsesOnlyPast) {
  Tape<double> tape;
  auto x = tape.constant(Tensor64({4, 1}, std::vector<double>{1, 10, 100, 1000}));
  auto w = tape.constant(Tensor64({1, 2}, std::vector<double>{2, 3}));
  auto b = tape.constant(Tensor64({1}, 0.5));
  // y[t] = b + 2 x[t-1] + 3 x[t]
  EXPECT_EQ(ad::causal_conv1d(x, w, b).value(), Tensor64({4, 1}, std::vector<double>{3.5, 32.5, 320.5, 3200.5}));
}
