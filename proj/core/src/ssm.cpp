#include "vmamba/ssm.hpp"

#include <array>
#include <cmath>
#include <type_traits>
#include <string>

namespace vmamba::ssm {

namespace {

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

template <typename T>
void require_negative(const BasicTensor<T>& a) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] < T{0})) {
      throw StabilityError("state matrix entry " + std::to_string(i) + " = " + std::to_string(a[i]) +
                           " is not negative");
    }
  }
}

template <typename T>
void require_nonnegative_delta(const BasicTensor<T>& delta) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!(delta[i] >= T{0})) throw ContractError("step size delta must be non-negative");
  }
}

// Shape checks shared by the fused kernels.
template <typename T>
void check_fused_shapes(const BasicTensor<T>& x, const BasicTensor<T>& delta, const BasicTensor<T>& a,
                        const BasicTensor<T>& b, const BasicTensor<T>& c, const BasicTensor<T>& d) {
  require_rank(x, 2, "scan x");
  require_rank(a, 2, "scan A");
  require_rank(b, 2, "scan B");
  require_rank(c, 2, "scan C");
  const std::size_t len = x.dim(0), ch = x.dim(1), n = a.dim(1);
  require_same_shape(delta.shape(), x.shape(), "scan delta");
  if (a.dim(0) != ch) throw ShapeError("scan: A has " + std::to_string(a.dim(0)) + " channels, x has " + std::to_string(ch));
  require_same_shape(b.shape(), Shape{len, n}, "scan B");
  require_same_shape(c.shape(), Shape{len, n}, "scan C");
  if (d.size() != ch) throw ShapeError("scan: D must have one entry per channel");
}

// Discretized (abar, bbar/b) for one element. For the exact rule,
// bbar = delta * phi(delta*a) * b; returned `bscale` is the factor multiplying b.
template <typename T>
inline void discretize_element(T dt, T a, Discretization mode, T& abar, T& bscale) {
  const T z = dt * a;
  T em1;
  if (std::abs(z) < T{0.5}) {
    em1 = std::expm1(z);
    abar = T{1} + em1;
  } else {
    abar = std::exp(z);
    em1 = abar - T{1};
  }
  if (mode == Discretization::kSimplified) {
    bscale = dt;
  } else {
    bscale = std::abs(z) < static_cast<T>(kSeriesThreshold) ? dt * phi(z) : em1 / a;
  }
}

}  // namespace

template <typename T>
T phi(T z) {
  if (std::abs(z) < static_cast<T>(kSeriesThreshold)) {
    // 1 + z/2! + z^2/3! + ... + z^5/6!
    return T{1} + z * (T{1} / 2 + z * (T{1} / 6 + z * (T{1} / 24 + z * (T{1} / 120 + z * (T{1} / 720)))));
  }
  return std::expm1(z) / z;
}

// k / (k+1)! for k = 1..16, the power-series coefficients of phi'.
constexpr std::array<double, 16> kPhiDerivCoeffs = [] {
  std::array<double, 16> c{};
  double fact = 2.0;
  for (int k = 1; k <= 16; ++k) {
    c[k - 1] = k / fact;
    fact *= k + 2;
  }
  return c;
}();

template <typename T>
T phi_derivative(T z) {
  if (std::abs(z) < T{0.5}) {
    constexpr int terms = std::is_same_v<T, float> ? 10 : 16;
    T acc = static_cast<T>(kPhiDerivCoeffs[terms - 1]);
    for (int k = terms - 2; k >= 0; --k) acc = acc * z + static_cast<T>(kPhiDerivCoeffs[k]);
    return acc;
  }
  return (std::exp(z) * (z - T{1}) + T{1}) / (z * z);
}

template <typename T>
ScalarZoh<T> zoh_scalar(T a, T b, T delta, Discretization mode) {
  if (!(a < T{0})) throw StabilityError("state matrix entry must be negative");
  if (!(delta >= T{0})) throw ContractError("step size delta must be non-negative");
  T abar, bscale;
  discretize_element(delta, a, mode, abar, bscale);
  return {abar, bscale * b};
}

template <typename T>
void validate(const SsmChannelParams<T>& p) {
  require_rank(p.a, 2, "SsmChannelParams A");
  if (p.d.size() != p.a.dim(0)) throw ShapeError("SsmChannelParams: D must have one entry per channel");
  require_negative(p.a);
}

template <typename T>
SsmChannelParams<T> default_channel_params(std::size_t channels, std::size_t state_size) {
  if (state_size == 0) throw ContractError("state size must be at least 1");
  SsmChannelParams<T> p{BasicTensor<T>({channels, state_size}), BasicTensor<T>({channels}, T{1})};
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < state_size; ++n) p.a.at(c, n) = -static_cast<T>(n + 1);
  return p;
}

template <typename T>
DiscreteParams<T> zoh_discretize(const BasicTensor<T>& a, const SelectiveInputs<T>& in,
                                 Discretization mode) {
  require_rank(a, 2, "zoh_discretize A");
  require_rank(in.b, 2, "zoh_discretize B");
  require_rank(in.delta, 2, "zoh_discretize delta");
  const std::size_t ch = a.dim(0), n = a.dim(1), len = in.delta.dim(0);
  if (in.delta.dim(1) != ch) throw ShapeError("zoh_discretize: delta channels differ from A");
  require_same_shape(in.b.shape(), Shape{len, n}, "zoh_discretize B");
  require_same_shape(in.c.shape(), Shape{len, n}, "zoh_discretize C");
  require_negative(a);
  require_nonnegative_delta(in.delta);

  DiscreteParams<T> dp{BasicTensor<T>({len, ch, n}), BasicTensor<T>({len, ch, n}), in.c};
  for (std::size_t k = 0; k < len; ++k)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t s = 0; s < n; ++s) {
        T abar, bscale;
        discretize_element(in.delta.at(k, c), a.at(c, s), mode, abar, bscale);
        const std::size_t idx = (k * ch + c) * n + s;
        dp.abar[idx] = abar;
        dp.bbar[idx] = bscale * in.b.at(k, s);
      }
  return dp;
}

template <typename T>
ScanResult<T> ssm_scan(const DiscreteParams<T>& dp, const BasicTensor<T>& x, const BasicTensor<T>& d,
                       const std::optional<BasicTensor<T>>& h0) {
  require_rank(x, 2, "ssm_scan x");
  require_rank(dp.abar, 3, "ssm_scan Abar");
  const std::size_t len = x.dim(0), ch = x.dim(1), n = dp.abar.dim(2);
  require_same_shape(dp.abar.shape(), Shape{len, ch, n}, "ssm_scan Abar");
  require_same_shape(dp.bbar.shape(), Shape{len, ch, n}, "ssm_scan Bbar");
  require_same_shape(dp.cbar.shape(), Shape{len, n}, "ssm_scan Cbar");
  if (d.size() != ch) throw ShapeError("ssm_scan: D must have one entry per channel");

  BasicTensor<T> h({ch, n});
  if (h0) {
    require_same_shape(h0->shape(), h.shape(), "ssm_scan h0");
    h = *h0;
  }
  BasicTensor<T> y({len, ch});
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T xv = x.at(k, c);
      T acc{0};
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t idx = (k * ch + c) * n + s;
        T& hs = h[c * n + s];
        hs = dp.abar[idx] * hs + dp.bbar[idx] * xv;
        acc += dp.cbar.at(k, s) * hs;
      }
      const T out = acc + d[c] * xv;
      if (!std::isfinite(out)) {
        throw NumericError("ssm_scan: non-finite value at step " + std::to_string(k) + ", channel " +
                           std::to_string(c));
      }
      y.at(k, c) = out;
    }
  }
  return {std::move(y), std::move(h)};
}

template <typename T>
SelectiveInputs<T> selective_params(const BasicTensor<T>& x, const SelectiveProjections<T>& proj) {
  require_rank(x, 2, "selective_params x");
  const std::size_t ch = x.dim(1);
  if (proj.w_b.rank() != 2 || proj.w_b.dim(0) != ch || proj.w_c.shape() != proj.w_b.shape()) {
    throw ShapeError("selective_params: W_B/W_C must be [" + std::to_string(ch) + ", N]");
  }
  if (proj.w_dt_down.rank() != 2 || proj.w_dt_down.dim(0) != ch ||
      proj.w_dt_up.shape() != Shape{proj.w_dt_down.dim(1), ch} || proj.b_dt.size() != ch) {
    throw ShapeError("selective_params: step projection shapes do not match " + std::to_string(ch) +
                     " channels");
  }
  SelectiveInputs<T> in{matmul(x, proj.w_b), matmul(x, proj.w_c),
                        matmul(matmul(x, proj.w_dt_down), proj.w_dt_up)};
  const std::size_t len = x.dim(0);
  for (std::size_t k = 0; k < len; ++k)
    for (std::size_t c = 0; c < ch; ++c) {
      auto& v = in.delta.at(k, c);
      v = ad::softplus_scalar(v + proj.b_dt[c]);
    }
  return in;
}

template <typename T>
BasicTensor<T> scan_fused(const BasicTensor<T>& x, const BasicTensor<T>& delta, const BasicTensor<T>& a,
                          const BasicTensor<T>& b, const BasicTensor<T>& c, const BasicTensor<T>& d,
                          Discretization mode, ScanCache<T>* cache) {
  check_fused_shapes(x, delta, a, b, c, d);
  const std::size_t len = x.dim(0), ch = x.dim(1), n = a.dim(1);
  if (cache) {
    cache->states = BasicTensor<T>({len, ch, n});
    cache->abar = BasicTensor<T>({len, ch, n});
    cache->bscale = BasicTensor<T>({len, ch, n});
  }
  std::vector<T> h(ch * n, T{0});
  BasicTensor<T> y({len, ch});
  for (std::size_t k = 0; k < len; ++k) {
    const T* brow = &b.at(k, 0);
    const T* crow = &c.at(k, 0);
    for (std::size_t ci = 0; ci < ch; ++ci) {
      const T dt = delta.at(k, ci);
      const T xv = x.at(k, ci);
      const T* arow = &a.at(ci, 0);
      T* hrow = h.data() + ci * n;
      T acc{0};
      const std::size_t base = (k * ch + ci) * n;
      for (std::size_t s = 0; s < n; ++s) {
        T abar, bscale;
        discretize_element(dt, arow[s], mode, abar, bscale);
        hrow[s] = abar * hrow[s] + bscale * brow[s] * xv;
        acc += crow[s] * hrow[s];
        if (cache) {
          cache->abar[base + s] = abar;
          cache->bscale[base + s] = bscale;
        }
      }
      if (cache) std::copy_n(hrow, n, cache->states.data().begin() + base);
      y.at(k, ci) = acc + d[ci] * xv;
    }
  }
  for (std::size_t k = 0; k < len; ++k)
    for (std::size_t ci = 0; ci < ch; ++ci)
      if (!std::isfinite(y.at(k, ci))) {
        throw NumericError("selective scan: non-finite output at step " + std::to_string(k));
      }
  return y;
}

template <typename T>
ScanGradients<T> scan_fused_backward(const BasicTensor<T>& x, const BasicTensor<T>& delta,
                                     const BasicTensor<T>& a, const BasicTensor<T>& b,
                                     const BasicTensor<T>& c, const BasicTensor<T>& d,
                                     Discretization mode, const ScanCache<T>& cache,
                                     const BasicTensor<T>& gy) {
  check_fused_shapes(x, delta, a, b, c, d);
  const std::size_t len = x.dim(0), ch = x.dim(1), n = a.dim(1);
  const BasicTensor<T>& states = cache.states;
  require_same_shape(states.shape(), Shape{len, ch, n}, "scan backward states");
  require_same_shape(cache.abar.shape(), Shape{len, ch, n}, "scan backward abar");
  require_same_shape(cache.bscale.shape(), Shape{len, ch, n}, "scan backward bscale");
  require_same_shape(gy.shape(), x.shape(), "scan backward dy");

  ScanGradients<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(delta.shape()), BasicTensor<T>(a.shape()),
                     BasicTensor<T>(b.shape()), BasicTensor<T>(c.shape()), BasicTensor<T>(d.shape())};
  // Adjoint of h_k, carried backwards in time.
  std::vector<T> gh(ch * n, T{0});
  const bool exact = mode == Discretization::kExactZoh;
  const T* pa = a.data().data();
  T* ga = g.a.data().data();
  for (std::size_t k = len; k-- > 0;) {
    const T* brow = b.data().data() + k * n;
    const T* crow = c.data().data() + k * n;
    T* gbrow = g.b.data().data() + k * n;
    T* gcrow = g.c.data().data() + k * n;
    for (std::size_t ci = 0; ci < ch; ++ci) {
      const std::size_t row = k * ch + ci;
      const T go = gy[row];
      const T dt = delta[row];
      const T xv = x[row];
      g.d[ci] += go * xv;
      T gx = go * d[ci];
      T gdt{0};
      const T* hk = states.data().data() + row * n;
      const T* hprev = k > 0 ? hk - ch * n : nullptr;
      const T* abar_row = cache.abar.data().data() + row * n;
      const T* bscale_row = cache.bscale.data().data() + row * n;
      const T* arow = pa + ci * n;
      T* garow = ga + ci * n;
      T* ghrow = gh.data() + ci * n;
      for (std::size_t s = 0; s < n; ++s) {
        const T av = arow[s];
        const T bv = brow[s];
        const T abar = abar_row[s];
        const T bscale = bscale_row[s];
        const T ghs = ghrow[s] + go * crow[s];
        gcrow[s] += go * hk[s];
        const T hp = hprev ? hprev[s] : T{0};
        const T gabar = ghs * hp;
        const T gbbar = ghs * xv;
        gx += ghs * bscale * bv;
        // abar = exp(dt * a)
        T gdt_s = gabar * abar * av;
        T ga_s = gabar * abar * dt;
        if (exact) {
          // bbar = dt * phi(dt*a) * b; d/d(dt) = exp(dt*a) * b, d/da = dt^2 * phi'(dt*a) * b
          gdt_s += gbbar * abar * bv;
          const T z = dt * av;
          const T dscale = std::abs(z) < T{0.5} ? dt * dt * phi_derivative(z) : (dt * abar - bscale) / av;
          ga_s += gbbar * dscale * bv;
        } else {
          // bbar = dt * b
          gdt_s += gbbar * bv;
        }
        gdt += gdt_s;
        garow[s] += ga_s;
        gbrow[s] += gbbar * bscale;
        ghrow[s] = ghs * abar;
      }
      g.x[row] = gx;
      g.delta[row] = gdt;
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> selective_scan(const BasicTensor<T>& x, const SsmChannelParams<T>& p,
                              const SelectiveProjections<T>& proj, Discretization mode) {
  validate(p);
  const auto in = selective_params(x, proj);
  return scan_fused(x, in.delta, p.a, in.b, in.c, p.d, mode);
}

template <typename T>
BasicTensor<T> lti_conv_oracle(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& c,
                               const BasicTensor<T>& d, const BasicTensor<T>& delta,
                               const BasicTensor<T>& x, Discretization mode) {
  require_rank(a, 2, "lti_conv_oracle A");
  require_rank(x, 2, "lti_conv_oracle x");
  const std::size_t ch = a.dim(0), n = a.dim(1), len = x.dim(0);
  if (x.dim(1) != ch || b.size() != n || c.size() != n || d.size() != ch || delta.size() != ch) {
    throw ShapeError("lti_conv_oracle: parameter shapes do not agree");
  }
  require_negative(a);
  require_nonnegative_delta(delta);
  BasicTensor<T> y({len, ch});
  for (std::size_t ci = 0; ci < ch; ++ci) {
    // Closed forms evaluated directly, not through the scan's discretization helper.
    std::vector<T> abar(n), bbar(n);
    for (std::size_t s = 0; s < n; ++s) {
      const T z = delta[ci] * a.at(ci, s);
      abar[s] = std::exp(z);
      bbar[s] = mode == Discretization::kSimplified ? delta[ci] * b[s] : std::expm1(z) / a.at(ci, s) * b[s];
    }
    std::vector<T> kernel(len);
    for (std::size_t j = 0; j < len; ++j) {
      T kj{0};
      for (std::size_t s = 0; s < n; ++s) kj += c[s] * std::pow(abar[s], static_cast<T>(j)) * bbar[s];
      kernel[j] = kj;
    }
    for (std::size_t k = 0; k < len; ++k) {
      T acc = d[ci] * x.at(k, ci);
      for (std::size_t j = 0; j <= k; ++j) acc += kernel[j] * x.at(k - j, ci);
      y.at(k, ci) = acc;
    }
  }
  return y;
}

template <typename T>
ad::Var<T> scan_op(const ad::Var<T>& x, const ad::Var<T>& delta, const ad::Var<T>& a,
                   const ad::Var<T>& b, const ad::Var<T>& c, const ad::Var<T>& d,
                   Discretization mode) {
  auto& tape = x.tape();
  const bool need_cache = tape.any_requires_grad({x, delta, a, b, c, d});
  ScanCache<T> cache;
  BasicTensor<T> y = scan_fused(x.value(), delta.value(), a.value(), b.value(), c.value(), d.value(),
                                mode, need_cache ? &cache : nullptr);
  return tape.record(
      "selective_scan", std::move(y), {x, delta, a, b, c, d},
      [x, delta, a, b, c, d, mode, cache = std::move(cache)](ad::Tape<T>& t,
                                                               const BasicTensor<T>& gy) {
        auto g = scan_fused_backward(x.value(), delta.value(), a.value(), b.value(), c.value(),
                                     d.value(), mode, cache, gy);
        t.accumulate(x, std::move(g.x));
        t.accumulate(delta, std::move(g.delta));
        t.accumulate(a, std::move(g.a));
        t.accumulate(b, std::move(g.b));
        t.accumulate(c, std::move(g.c));
        t.accumulate(d, std::move(g.d));
      });
}

#define VMAMBA_SSM_INSTANTIATE(T)                                                                   \
  template T phi(T);                                                                                \
  template T phi_derivative(T);                                                                     \
  template ScalarZoh<T> zoh_scalar(T, T, T, Discretization);                                        \
  template void validate(const SsmChannelParams<T>&);                                               \
  template SsmChannelParams<T> default_channel_params(std::size_t, std::size_t);                    \
  template DiscreteParams<T> zoh_discretize(const BasicTensor<T>&, const SelectiveInputs<T>&,       \
                                            Discretization);                                        \
  template ScanResult<T> ssm_scan(const DiscreteParams<T>&, const BasicTensor<T>&,                  \
                                  const BasicTensor<T>&, const std::optional<BasicTensor<T>>&);     \
  template SelectiveInputs<T> selective_params(const BasicTensor<T>&,                               \
                                               const SelectiveProjections<T>&);                     \
  template BasicTensor<T> selective_scan(const BasicTensor<T>&, const SsmChannelParams<T>&,         \
                                         const SelectiveProjections<T>&, Discretization);           \
  template BasicTensor<T> scan_fused(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                     const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                     const BasicTensor<T>&, const BasicTensor<T>&, Discretization,  \
                                     ScanCache<T>*);                                              \
  template ScanGradients<T> scan_fused_backward(                                                    \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
      const BasicTensor<T>&, const BasicTensor<T>&, Discretization, const ScanCache<T>&,            \
      const BasicTensor<T>&);                                                                       \
  template BasicTensor<T> lti_conv_oracle(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                          const BasicTensor<T>&, const BasicTensor<T>&,             \
                                          const BasicTensor<T>&, const BasicTensor<T>&,             \
                                          Discretization);                                          \
  template ad::Var<T> scan_op(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&,              \
                              const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&,              \
                              Discretization);

VMAMBA_SSM_INSTANTIATE(float)
VMAMBA_SSM_INSTANTIATE(double)
VMAMBA_SSM_INSTANTIATE(long double)

#undef VMAMBA_SSM_INSTANTIATE

}  // namespace vmamba::ssm
