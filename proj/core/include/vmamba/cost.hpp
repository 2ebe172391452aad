#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vmamba/model.hpp"

namespace vmamba::cost {

enum class FlopConvention {
  /// One FLOP per multiply-accumulate of the dense layers only: tokenizer,
  /// the two input projections, the output projection and the head. This is
  /// the default convention.
  kDenseMac,
  /// Two FLOPs per multiply-accumulate over every stage, including norms,
  /// activations, convolution, selective projections, discretization and scan.
  kFull,
};

FlopConvention parse_flop_convention(std::string_view name);
std::string to_string(FlopConvention c);

struct CostReport {
  FlopConvention convention = FlopConvention::kDenseMac;
  std::map<std::string, std::uint64_t> flops_by_stage;
  std::map<std::string, std::string> formulas;
  std::uint64_t flops_total = 0;
  std::uint64_t params_total = 0;
  std::size_t token_count = 0;
  model::ModelConfig config;

  std::string to_json(int indent = 2) const;
};

CostReport count_flops(const model::ModelConfig& cfg, FlopConvention convention = FlopConvention::kDenseMac);

/// Closed-form weight count.
std::uint64_t count_params(const model::ModelConfig& cfg);

/// Element count of an instantiated weight set.
template <typename T>
std::uint64_t enumerate_params(const ad::ParameterSet<T>& params) {
  std::uint64_t total = 0;
  for (const auto& [name, t] : params) total += t.size();
  return total;
}

/// 2n^2 d (QK^T) + 2n^2 d (AV) + 5n^2 (softmax).
std::uint64_t attention_flops(std::uint64_t n, std::uint64_t d);

/// One selective scan direction over n tokens of width ch under the full
/// convention: B/C/step projections, discretization, recurrence and skip.
std::uint64_t selective_scan_flops(std::uint64_t n, std::uint64_t ch, std::uint64_t state, std::uint64_t dt_rank);

/// Smallest n at which attention_flops exceeds selective_scan_flops.
std::uint64_t attention_crossover(std::uint64_t d, std::uint64_t state, std::uint64_t dt_rank);

struct ScalingPoint {
  std::size_t n = 0;
  double median_ns_scan = 0;
  double median_ns_attn = 0;
  double iqr_ns_scan = 0;
  double iqr_ns_attn = 0;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  double slope_scan = 0, r2_scan = 0;
  double slope_attn = 0, r2_attn = 0;
  std::vector<std::string> warnings;

  std::string to_csv() const;
};

struct ScalingOptions {
  std::size_t dim = 64;
  std::size_t state_size = 16;
  std::size_t trials = 5;
  std::size_t warmup = 1;
  /// Each trial repeats the kernel until at least this much time passes.
  double min_trial_ms = 20.0;
  std::uint64_t seed = 0;
  bool include_attention = true;
};

struct LineFit {
  double slope = 0, intercept = 0, r2 = 0;
};
/// Least-squares line through (log x, log y).
LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Single-threaded timing of the selective scan forward and naive attention.
ScalingReport scaling_experiment(const std::vector<std::size_t>& token_counts, const ScalingOptions& options);

/// Naive single-head softmax attention over (n, d) inputs.
template <typename T>
BasicTensor<T> naive_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v);

}  // namespace vmamba::cost
