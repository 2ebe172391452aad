#include "vmamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vmamba::ad {

namespace {

std::vector<std::size_t> pick_indices(std::size_t size, std::size_t cap, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (cap == 0 || cap >= size) return idx;
  // Partial Fisher-Yates; std::shuffle's algorithm is implementation-defined.
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename T>
T evaluate(const ScalarFn<T>& f, const ParameterSet<T>& params) {
  const T v = f(params);
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
  return v;
}

template <typename T, typename R>
FdReport central_differences(const ScalarFn<R>& f, const ParameterSet<T>& params,
                             const GradientSet<T>& analytic, const FdOptions& options) {
  if (!(options.eps > 0)) throw ContractError("finite_diff_check: eps must be positive");
  FdReport report;
  std::mt19937_64 rng(options.seed);
  ParameterSet<R> work;
  for (const auto& [name, tensor] : params) work.emplace(name, tensor.template cast<R>());
  const R eps = static_cast<R>(options.eps);
  for (auto& [name, tensor] : work) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw ContractError("finite_diff_check: no analytic gradient for " + name);
    require_same_shape(it->second.shape(), tensor.shape(), "finite_diff_check");
    for (std::size_t i : pick_indices(tensor.size(), options.max_per_tensor, rng)) {
      const R saved = tensor[i];
      tensor[i] = saved + eps;
      const R plus = evaluate(f, work);
      tensor[i] = saved - eps;
      const R minus = evaluate(f, work);
      tensor[i] = saved;
      const double numeric = static_cast<double>(
          (static_cast<long double>(plus) - static_cast<long double>(minus)) / (2.0L * options.eps));
      const double a = static_cast<double>(it->second[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denom_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (report.checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

template <typename T>
GradientSet<T> tape_gradients(const LossBuilder<T>& build, const ParameterSet<T>& params) {
  Tape<T> tape;
  auto vars = bind_parameters(tape, params, true);
  Var<T> loss = build(tape, vars);
  return tape.backward(loss);
}

template <typename T>
ScalarFn<T> forward_only(const LossBuilder<T>& build) {
  return [&build](const ParameterSet<T>& p) {
    Tape<T> tape;
    auto vars = bind_parameters(tape, p, false);
    return build(tape, vars).value()[0];
  };
}

}  // namespace

template <typename T>
FdReport finite_diff_check(const ScalarFn<T>& f, const ParameterSet<T>& params,
                           const GradientSet<T>& analytic, const FdOptions& options) {
  return central_differences<T, T>(f, params, analytic, options);
}

template <typename T>
FdReport check_gradients(const LossBuilder<T>& build, const ParameterSet<T>& params,
                         const FdOptions& options) {
  return central_differences<T, T>(forward_only(build), params, tape_gradients(build, params), options);
}

template <typename T, typename R>
FdReport check_gradients_against(const LossBuilder<T>& build, const LossBuilder<R>& reference,
                                 const ParameterSet<T>& params, const FdOptions& options) {
  return central_differences<T, R>(forward_only(reference), params, tape_gradients(build, params), options);
}

template FdReport finite_diff_check(const ScalarFn<float>&, const ParameterSet<float>&,
                                    const GradientSet<float>&, const FdOptions&);
template FdReport finite_diff_check(const ScalarFn<double>&, const ParameterSet<double>&,
                                    const GradientSet<double>&, const FdOptions&);
template FdReport check_gradients(const LossBuilder<float>&, const ParameterSet<float>&,
                                  const FdOptions&);
template FdReport check_gradients(const LossBuilder<double>&, const ParameterSet<double>&,
                                  const FdOptions&);
template FdReport check_gradients_against(const LossBuilder<double>&, const LossBuilder<long double>&,
                                          const ParameterSet<double>&, const FdOptions&);

}  // namespace vmamba::ad
