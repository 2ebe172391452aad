#pragma once

// Selective state-space kernels with a diagonal state matrix.
//
// Shapes (len = sequence length, ch = channels, N = state size):
//   x, delta, y      [len, ch]
//   A                [ch, N]     every entry < 0
//   B, C             [len, N]    shared across channels, one row per step
//   D                [ch]
//   Abar, Bbar       [len, ch, N]
//   h0, h_final      [ch, N]
//
// Recurrence: h_k = Abar_k * h_{k-1} + Bbar_k * x_k,  y_k = <C_k, h_k> + D * x_k.

#include <optional>
#include <utility>

#include "vmamba/autodiff.hpp"
#include "vmamba/tensor.hpp"

namespace vmamba::ssm {

/// A state matrix entry is not strictly negative.
class StabilityError : public ContractError {
 public:
  using ContractError::ContractError;
};

enum class Discretization {
  /// Bbar = (exp(delta*a) - 1) / (delta*a) * delta * b
  kExactZoh,
  /// Bbar = delta * b, the first-order form common in Mamba code.
  kSimplified,
};

/// |delta*a| below this switches (exp(z)-1)/z to its power series.
inline constexpr double kSeriesThreshold = 1e-4;

/// (exp(z) - 1) / z, continuous at z = 0.
template <typename T> T phi(T z);
/// d/dz of phi.
template <typename T> T phi_derivative(T z);

template <typename T>
struct ScalarZoh {
  T abar;
  T bbar;
};

/// Discretizes one (a, b) pair with step delta. Throws StabilityError if
/// a >= 0 and ContractError if delta < 0.
template <typename T>
ScalarZoh<T> zoh_scalar(T a, T b, T delta, Discretization mode = Discretization::kExactZoh);

template <typename T>
struct SsmChannelParams {
  BasicTensor<T> a;  // [ch, N]
  BasicTensor<T> d;  // [ch]
  std::size_t channels() const { return a.dim(0); }
  std::size_t state_size() const { return a.dim(1); }
};

/// Validates a:[ch,N] < 0 elementwise and d:[ch].
template <typename T>
void validate(const SsmChannelParams<T>& p);

/// Default initialization: a[c,n] = -(n+1), d[c] = 1.
template <typename T>
SsmChannelParams<T> default_channel_params(std::size_t channels, std::size_t state_size);

template <typename T>
struct SelectiveInputs {
  BasicTensor<T> b;      // [len, N]
  BasicTensor<T> c;      // [len, N]
  BasicTensor<T> delta;  // [len, ch]
};

/// Learned projections producing SelectiveInputs from tokens x:[len, ch].
/// The step projection is low rank: W_delta = dt_down * dt_up.
template <typename T>
struct SelectiveProjections {
  BasicTensor<T> w_b;        // [ch, N]
  BasicTensor<T> w_c;        // [ch, N]
  BasicTensor<T> w_dt_down;  // [ch, R]
  BasicTensor<T> w_dt_up;    // [R, ch]
  BasicTensor<T> b_dt;       // [ch]
};

template <typename T>
struct DiscreteParams {
  BasicTensor<T> abar;  // [len, ch, N]
  BasicTensor<T> bbar;  // [len, ch, N]
  BasicTensor<T> cbar;  // [len, N]
};

template <typename T>
struct ScanResult {
  BasicTensor<T> y;        // [len, ch]
  BasicTensor<T> h_final;  // [ch, N]
};

template <typename T>
DiscreteParams<T> zoh_discretize(const BasicTensor<T>& a, const SelectiveInputs<T>& in,
                                 Discretization mode = Discretization::kExactZoh);

/// Sequential scan. Throws NumericError naming the first step whose state or
/// output is non-finite.
template <typename T>
ScanResult<T> ssm_scan(const DiscreteParams<T>& dp, const BasicTensor<T>& x, const BasicTensor<T>& d,
                       const std::optional<BasicTensor<T>>& h0 = std::nullopt);

template <typename T>
SelectiveInputs<T> selective_params(const BasicTensor<T>& x, const SelectiveProjections<T>& proj);

/// ssm_scan(zoh_discretize(A, selective_params(x)), x, 0), evaluated by the
/// fused kernel below.
template <typename T>
BasicTensor<T> selective_scan(const BasicTensor<T>& x, const SsmChannelParams<T>& p,
                              const SelectiveProjections<T>& proj,
                              Discretization mode = Discretization::kExactZoh);

/// Forward intermediates kept for the backward pass, each [len, ch, N].
template <typename T>
struct ScanCache {
  BasicTensor<T> states;
  BasicTensor<T> abar;
  BasicTensor<T> bscale;  // Bbar / b
};

/// Fused forward over precomputed selective inputs. Discretizes on the fly and
/// optionally records the intermediates the backward pass needs.
template <typename T>
BasicTensor<T> scan_fused(const BasicTensor<T>& x, const BasicTensor<T>& delta, const BasicTensor<T>& a,
                          const BasicTensor<T>& b, const BasicTensor<T>& c, const BasicTensor<T>& d,
                          Discretization mode, ScanCache<T>* cache = nullptr);

template <typename T>
struct ScanGradients {
  BasicTensor<T> x, delta, a, b, c, d;
};

/// Reverse-time adjoint of scan_fused given its cache and dL/dy.
template <typename T>
ScanGradients<T> scan_fused_backward(const BasicTensor<T>& x, const BasicTensor<T>& delta,
                                     const BasicTensor<T>& a, const BasicTensor<T>& b,
                                     const BasicTensor<T>& c, const BasicTensor<T>& d,
                                     Discretization mode, const ScanCache<T>& cache,
                                     const BasicTensor<T>& gy);

/// Test oracle for time-invariant parameters: materializes the kernel
/// K_j = <C, Abar^j * Bbar> per channel and convolves it with x.
/// a:[ch,N], b:[N], c:[N], d:[ch], delta:[ch], x:[len,ch].
template <typename T>
BasicTensor<T> lti_conv_oracle(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& c,
                               const BasicTensor<T>& d, const BasicTensor<T>& delta,
                               const BasicTensor<T>& x, Discretization mode = Discretization::kExactZoh);

/// Differentiable selective scan on a tape; a must already be negative.
template <typename T>
ad::Var<T> scan_op(const ad::Var<T>& x, const ad::Var<T>& delta, const ad::Var<T>& a,
                   const ad::Var<T>& b, const ad::Var<T>& c, const ad::Var<T>& d,
                   Discretization mode = Discretization::kExactZoh);

}  // namespace vmamba::ssm
