#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "vmamba/autodiff.hpp"

namespace vmamba::ad {

struct FdOptions {
  double eps = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, denom_floor).
  double denom_floor = 1e-8;
  /// 0 checks every scalar; otherwise a seeded sample of at most this many per tensor.
  std::size_t max_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
};

template <typename T>
using ScalarFn = std::function<T(const ParameterSet<T>&)>;

template <typename T>
using LossBuilder = std::function<Var<T>(Tape<T>&, const std::map<std::string, Var<T>>&)>;

/// Compares `analytic` against central differences (f(θ+eps) - f(θ-eps)) / 2eps
/// for each checked scalar θ. Throws NumericError if f is non-finite.
template <typename T>
FdReport finite_diff_check(const ScalarFn<T>& f, const ParameterSet<T>& params,
                           const GradientSet<T>& analytic, const FdOptions& options = {});

/// Records `build` on a fresh tape, runs backward, and checks the result.
template <typename T>
FdReport check_gradients(const LossBuilder<T>& build, const ParameterSet<T>& params,
                         const FdOptions& options = {});

/// Analytic gradients from `build` in T; central differences from `reference`
/// evaluated in R at the same point. With R wider than T the difference
/// quotient's roundoff drops below the gradients it is judged against.
/// Instantiated for T = double, R = long double.
template <typename T, typename R>
FdReport check_gradients_against(const LossBuilder<T>& build, const LossBuilder<R>& reference,
                                 const ParameterSet<T>& params, const FdOptions& options = {});

}  // namespace vmamba::ad
