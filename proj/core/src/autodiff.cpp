#include "vmamba/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace vmamba::ad {

// ---- Tape ------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::leaf(std::string name, TensorT value) {
  Node node;
  node.value = std::move(value);
  node.op = "leaf";
  node.leaf_name = std::move(name);
  node.requires_grad = true;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(TensorT value) {
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
bool Tape<T>::any_requires_grad(const std::vector<Var<T>>& vs) const {
  return std::any_of(vs.begin(), vs.end(), [this](const Var<T>& v) { return requires_grad(v); });
}

template <typename T>
Var<T> Tape<T>::record(std::string op, TensorT value, const std::vector<Var<T>>& inputs,
                       BackwardFn backward) {
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractError(op + ": input recorded on a different tape");
  }
  Node node;
  node.value = std::move(value);
  node.op = std::move(op);
  node.requires_grad = any_requires_grad(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::accumulate(const Var<T>& v, const TensorT& g) {
  Node& node = nodes_.at(v.id());
  if (!node.requires_grad) return;
  require_same_shape(node.value.shape(), g.shape(), "gradient accumulation");
  if (!node.grad) {
    node.grad = g;
  } else {
    axpy_inplace(*node.grad, T{1}, g);
  }
}

template <typename T>
void Tape<T>::accumulate(const Var<T>& v, TensorT&& g) {
  Node& node = nodes_.at(v.id());
  if (!node.requires_grad) return;
  require_same_shape(node.value.shape(), g.shape(), "gradient accumulation");
  if (!node.grad) {
    node.grad = std::move(g);
  } else {
    axpy_inplace(*node.grad, T{1}, g);
  }
}

template <typename T>
GradientSet<T> Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss recorded on a different tape");
  if (nodes_.at(loss.id()).value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_to_string(nodes_[loss.id()].value.shape()));
  }
  for (auto& n : nodes_) n.grad.reset();
  Node& root = nodes_[loss.id()];
  if (root.requires_grad) root.grad = TensorT::ones(root.value.shape());

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.is_leaf || !node.requires_grad || !node.grad) continue;
    if (!node.backward) throw UnsupportedOpError("no backward rule for op '" + node.op + "'");
    // The closure only touches nodes with smaller ids, so this reference stays valid.
    node.backward(*this, *node.grad);
  }

  GradientSet<T> grads;
  for (auto& node : nodes_) {
    if (!node.is_leaf || !node.requires_grad) continue;
    grads[node.leaf_name] = node.grad ? *node.grad : TensorT::zeros(node.value.shape());
  }
  return grads;
}

template <typename T>
std::map<std::string, Var<T>> bind_parameters(Tape<T>& tape, const ParameterSet<T>& params,
                                              bool trainable) {
  std::map<std::string, Var<T>> vars;
  for (const auto& [name, value] : params) {
    vars.emplace(name, trainable ? tape.leaf(name, value) : tape.constant(value));
  }
  return vars;
}

// ---- scalar helpers --------------------------------------------------------

template <typename T>
T softplus_scalar(T x) {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// ---- ops -------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto& tape = a.tape();
  return tape.record("add", vmamba::add(a.value(), b.value()), {a, b},
                     [a, b](Tape<T>& t, const BasicTensor<T>& g) {
                       t.accumulate(a, g);
                       t.accumulate(b, g);
                     });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto& tape = a.tape();
  return tape.record("sub", vmamba::sub(a.value(), b.value()), {a, b},
                     [a, b](Tape<T>& t, const BasicTensor<T>& g) {
                       t.accumulate(a, g);
                       t.accumulate(b, vmamba::scale(g, T{-1}));
                     });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto& tape = a.tape();
  return tape.record("mul", hadamard(a.value(), b.value()), {a, b},
                     [a, b](Tape<T>& t, const BasicTensor<T>& g) {
                       if (t.requires_grad(a)) t.accumulate(a, hadamard(g, b.value()));
                       if (t.requires_grad(b)) t.accumulate(b, hadamard(g, a.value()));
                     });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  auto& tape = a.tape();
  return tape.record("scale", vmamba::scale(a.value(), factor), {a},
                     [a, factor](Tape<T>& t, const BasicTensor<T>& g) {
                       t.accumulate(a, vmamba::scale(g, factor));
                     });
}

template <typename T>
Var<T> add_row_bias(const Var<T>& x, const Var<T>& bias) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("add_row_bias: x must be rank 2");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (bias.value().size() != n) {
    throw ShapeError("add_row_bias: bias has " + std::to_string(bias.value().size()) +
                     " elements, expected " + std::to_string(n));
  }
  BasicTensor<T> out = xv;
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bv[j];
  return x.tape().record("add_row_bias", std::move(out), {x, bias},
                         [x, bias, m, n](Tape<T>& t, const BasicTensor<T>& g) {
                           t.accumulate(x, g);
                           if (t.requires_grad(bias)) {
                             BasicTensor<T> gb(bias.value().shape());
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
                             t.accumulate(bias, std::move(gb));
                           }
                         });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return a.tape().record("matmul", vmamba::matmul(a.value(), b.value()), {a, b},
                         [a, b](Tape<T>& t, const BasicTensor<T>& g) {
                           if (t.requires_grad(a)) t.accumulate(a, matmul_nt(g, b.value()));
                           if (t.requires_grad(b)) t.accumulate(b, matmul_tn(a.value(), g));
                         });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  return a.tape().record("matmul_nt", vmamba::matmul_nt(a.value(), b.value()), {a, b},
                         [a, b](Tape<T>& t, const BasicTensor<T>& g) {
                           if (t.requires_grad(a)) t.accumulate(a, vmamba::matmul(g, b.value()));
                           if (t.requires_grad(b)) t.accumulate(b, matmul_tn(g, a.value()));
                         });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  BasicTensor<T> out({1}, vmamba::sum(a.value()));
  return a.tape().record("sum", std::move(out), {a}, [a](Tape<T>& t, const BasicTensor<T>& g) {
    t.accumulate(a, BasicTensor<T>(a.value().shape(), g[0]));
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return a.tape().record("reshape", a.value().reshaped(std::move(shape)), {a},
                         [a](Tape<T>& t, const BasicTensor<T>& g) {
                           t.accumulate(a, g.reshaped(a.value().shape()));
                         });
}

template <typename T>
Var<T> silu(const Var<T>& a) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.storage()) v = v * sigmoid_scalar(v);
  return a.tape().record("silu", std::move(out), {a}, [a](Tape<T>& t, const BasicTensor<T>& g) {
    BasicTensor<T> ga = g;
    const auto& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const T s = sigmoid_scalar(x[i]);
      ga[i] *= s * (T{1} + x[i] * (T{1} - s));
    }
    t.accumulate(a, std::move(ga));
  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.storage()) v = softplus_scalar(v);
  return a.tape().record("softplus", std::move(out), {a},
                         [a](Tape<T>& t, const BasicTensor<T>& g) {
                           BasicTensor<T> ga = g;
                           const auto& x = a.value();
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= sigmoid_scalar(x[i]);
                           t.accumulate(a, std::move(ga));
                         });
}

template <typename T>
Var<T> neg_exp(const Var<T>& a) {
  BasicTensor<T> out = a.value();
  for (auto& v : out.storage()) v = -std::exp(v);
  auto node = a.tape().record("neg_exp", out, {a},
                              [a, out](Tape<T>& t, const BasicTensor<T>& g) {
                                t.accumulate(a, hadamard(g, out));
                              });
  return node;
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("layer_norm: x must be rank 2");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(n) + " elements");
  }
  BasicTensor<T> xhat({m, n});
  std::vector<T> inv_std(m);
  BasicTensor<T> out({m, n});
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t i = 0; i < m; ++i) {
    T mean{0};
    for (std::size_t j = 0; j < n; ++j) mean += xv.at(i, j);
    mean /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) {
      const T d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<T>(n);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat.at(i, j) = (xv.at(i, j) - mean) * inv_std[i];
      out.at(i, j) = gv[j] * xhat.at(i, j) + bv[j];
    }
  }
  return x.tape().record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), m, n](
          Tape<T>& t, const BasicTensor<T>& g) {
        const auto& gv = gamma.value();
        if (t.requires_grad(gamma) || t.requires_grad(beta)) {
          BasicTensor<T> gg(gamma.value().shape()), gb(beta.value().shape());
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              gg[j] += g.at(i, j) * xhat.at(i, j);
              gb[j] += g.at(i, j);
            }
          t.accumulate(gamma, std::move(gg));
          t.accumulate(beta, std::move(gb));
        }
        if (!t.requires_grad(x)) return;
        BasicTensor<T> gx({m, n});
        for (std::size_t i = 0; i < m; ++i) {
          T mean_g{0}, mean_gx{0};
          for (std::size_t j = 0; j < n; ++j) {
            const T gh = g.at(i, j) * gv[j];
            mean_g += gh;
            mean_gx += gh * xhat.at(i, j);
          }
          mean_g /= static_cast<T>(n);
          mean_gx /= static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const T gh = g.at(i, j) * gv[j];
            gx.at(i, j) = inv_std[i] * (gh - mean_g - xhat.at(i, j) * mean_gx);
          }
        }
        t.accumulate(x, std::move(gx));
      });
}

template <typename T>
Var<T> causal_conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2) throw ShapeError("causal_conv1d: x and w must be rank 2");
  const std::size_t len = xv.dim(0), ch = xv.dim(1), k = wv.dim(1);
  if (wv.dim(0) != ch || b.value().size() != ch) {
    throw ShapeError("causal_conv1d: weight " + shape_to_string(wv.shape()) + " / bias " +
                     shape_to_string(b.value().shape()) + " do not match " + std::to_string(ch) +
                     " channels");
  }
  BasicTensor<T> out({len, ch});
  const auto& bv = b.value();
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      T acc = bv[c];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
        if (src >= 0) acc += wv.at(c, j) * xv.at(static_cast<std::size_t>(src), c);
      }
      out.at(t, c) = acc;
    }
  }
  return x.tape().record(
      "causal_conv1d", std::move(out), {x, w, b},
      [x, w, b, len, ch, k](Tape<T>& tp, const BasicTensor<T>& g) {
        const auto& xv = x.value();
        const auto& wv = w.value();
        BasicTensor<T> gx({len, ch}), gw({ch, k}), gb(b.value().shape());
        for (std::size_t t = 0; t < len; ++t) {
          for (std::size_t c = 0; c < ch; ++c) {
            const T go = g.at(t, c);
            gb[c] += go;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src =
                  static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
              if (src < 0) continue;
              const auto s = static_cast<std::size_t>(src);
              gw.at(c, j) += go * xv.at(s, c);
              gx.at(s, c) += go * wv.at(c, j);
            }
          }
        }
        tp.accumulate(x, std::move(gx));
        tp.accumulate(w, std::move(gw));
        tp.accumulate(b, std::move(gb));
      });
}

template <typename T>
Var<T> permute_rows(const Var<T>& x, const std::vector<std::size_t>& order) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("permute_rows: x must be rank 2");
  const std::size_t len = xv.dim(0), n = xv.dim(1);
  if (order.size() != len) {
    throw ShapeError("permute_rows: permutation of length " + std::to_string(order.size()) +
                     " applied to " + std::to_string(len) + " rows");
  }
  BasicTensor<T> out({len, n});
  for (std::size_t i = 0; i < len; ++i) {
    if (order[i] >= len) throw ShapeError("permute_rows: index out of range");
    std::copy_n(xv.data().begin() + order[i] * n, n, out.data().begin() + i * n);
  }
  return x.tape().record("permute_rows", std::move(out), {x},
                         [x, order, len, n](Tape<T>& t, const BasicTensor<T>& g) {
                           BasicTensor<T> gx({len, n});
                           for (std::size_t i = 0; i < len; ++i)
                             for (std::size_t j = 0; j < n; ++j) gx.at(order[i], j) += g.at(i, j);
                           t.accumulate(x, std::move(gx));
                         });
}

template <typename T>
Var<T> concat_rows(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
    throw ShapeError("concat_rows: incompatible shapes " + shape_to_string(av.shape()) + " and " +
                     shape_to_string(bv.shape()));
  }
  const std::size_t ma = av.dim(0), mb = bv.dim(0), n = av.dim(1);
  std::vector<T> data(av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  return a.tape().record("concat_rows", BasicTensor<T>({ma + mb, n}, std::move(data)), {a, b},
                         [a, b, ma, mb, n](Tape<T>& t, const BasicTensor<T>& g) {
                           const auto src = g.data();
                           if (t.requires_grad(a)) {
                             t.accumulate(a, BasicTensor<T>({ma, n}, std::vector<T>(
                                                                         src.begin(), src.begin() + ma * n)));
                           }
                           if (t.requires_grad(b)) {
                             t.accumulate(b, BasicTensor<T>({mb, n}, std::vector<T>(
                                                                         src.begin() + ma * n, src.end())));
                           }
                         });
}

template <typename T>
Var<T> slice_row(const Var<T>& x, std::size_t row) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || row >= xv.dim(0)) throw ShapeError("slice_row: row out of range");
  const std::size_t n = xv.dim(1);
  std::vector<T> data(xv.data().begin() + row * n, xv.data().begin() + (row + 1) * n);
  return x.tape().record("slice_row", BasicTensor<T>({1, n}, std::move(data)), {x},
                         [x, row, n](Tape<T>& t, const BasicTensor<T>& g) {
                           BasicTensor<T> gx(x.value().shape());
                           std::copy_n(g.data().begin(), n, gx.data().begin() + row * n);
                           t.accumulate(x, std::move(gx));
                         });
}

template <typename T>
Var<T> mean_rows(const Var<T>& x) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("mean_rows: x must be rank 2");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  BasicTensor<T> out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv.at(i, j);
  for (auto& v : out.storage()) v /= static_cast<T>(m);
  return x.tape().record("mean_rows", std::move(out), {x},
                         [x, m, n](Tape<T>& t, const BasicTensor<T>& g) {
                           BasicTensor<T> gx({m, n});
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) gx.at(i, j) = g[j] / static_cast<T>(m);
                           t.accumulate(x, std::move(gx));
                         });
}

template <typename T>
Var<T> smoothed_cross_entropy(const Var<T>& logits, std::size_t label, T eps) {
  if (!(eps >= T{0} && eps < T{1})) throw ContractError("label smoothing must lie in [0, 1)");
  const auto& z = logits.value();
  const std::size_t k = z.size();
  if (label >= k) throw ContractError("label out of range");
  T zmax = z[0];
  for (std::size_t i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
  T denom{0};
  for (std::size_t i = 0; i < k; ++i) denom += std::exp(z[i] - zmax);
  const T log_denom = std::log(denom) + zmax;
  std::vector<T> p(k), q(k, eps / static_cast<T>(k));
  q[label] += T{1} - eps;
  T loss{0};
  for (std::size_t i = 0; i < k; ++i) {
    const T logp = z[i] - log_denom;
    p[i] = std::exp(logp);
    loss -= q[i] * logp;
  }
  return logits.tape().record("smoothed_cross_entropy", BasicTensor<T>({1}, loss), {logits},
                              [logits, p = std::move(p), q = std::move(q)](
                                  Tape<T>& t, const BasicTensor<T>& g) {
                                BasicTensor<T> gz(logits.value().shape());
                                for (std::size_t i = 0; i < p.size(); ++i) gz[i] = g[0] * (p[i] - q[i]);
                                t.accumulate(logits, std::move(gz));
                              });
}

#define VMAMBA_AD_INSTANTIATE(T)                                                             \
  template class Tape<T>;                                                                    \
  template std::map<std::string, Var<T>> bind_parameters(Tape<T>&, const ParameterSet<T>&,   \
                                                         bool);                              \
  template T softplus_scalar(T);                                                             \
  template T sigmoid_scalar(T);                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                         \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                         \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                         \
  template Var<T> scale(const Var<T>&, T);                                                   \
  template Var<T> add_row_bias(const Var<T>&, const Var<T>&);                                \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                      \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                   \
  template Var<T> sum(const Var<T>&);                                                        \
  template Var<T> reshape(const Var<T>&, Shape);                                             \
  template Var<T> silu(const Var<T>&);                                                       \
  template Var<T> softplus(const Var<T>&);                                                   \
  template Var<T> neg_exp(const Var<T>&);                                                    \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                \
  template Var<T> causal_conv1d(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> permute_rows(const Var<T>&, const std::vector<std::size_t>&);              \
  template Var<T> concat_rows(const Var<T>&, const Var<T>&);                                 \
  template Var<T> slice_row(const Var<T>&, std::size_t);                                     \
  template Var<T> mean_rows(const Var<T>&);                                                  \
  template Var<T> smoothed_cross_entropy(const Var<T>&, std::size_t, T);

VMAMBA_AD_INSTANTIATE(float)
VMAMBA_AD_INSTANTIATE(double)
VMAMBA_AD_INSTANTIATE(long double)

#undef VMAMBA_AD_INSTANTIATE

}  // namespace vmamba::ad
