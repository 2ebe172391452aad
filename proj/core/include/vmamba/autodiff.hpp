#pragma once

// Tape-based reverse-mode differentiation with op-level vector-Jacobian rules.
//
// Every differentiable op appends one node to the tape holding its output value
// and a closure that maps the output gradient to input gradients. backward()
// walks the tape in reverse record order, which is a valid topological order
// because inputs are always recorded before the ops that consume them.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vmamba/tensor.hpp"

namespace vmamba::ad {

/// A gradient reached an op that was recorded without a backward rule.
class UnsupportedOpError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
using ParameterSet = std::map<std::string, BasicTensor<T>>;

/// Leaf name -> d(loss)/d(leaf); shapes match the leaves.
template <typename T>
using GradientSet = std::map<std::string, BasicTensor<T>>;

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const;
  std::size_t id() const { return id_; }
  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;
  /// Receives the gradient of the node's output and accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const TensorT& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A named leaf that receives a gradient.
  Var<T> leaf(std::string name, TensorT value);
  /// A value that never receives a gradient.
  Var<T> constant(TensorT value);
  /// Appends an op output. Without a backward rule the op is marked
  /// unsupported and backward() throws if a gradient reaches it.
  Var<T> record(std::string op, TensorT value, const std::vector<Var<T>>& inputs,
                BackwardFn backward);

  const TensorT& value(const Var<T>& v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(const Var<T>& v) const { return nodes_.at(v.id()).requires_grad; }
  bool any_requires_grad(const std::vector<Var<T>>& vs) const;

  /// Adds g into the gradient buffer of v; no-op when v needs no gradient.
  void accumulate(const Var<T>& v, const TensorT& g);
  void accumulate(const Var<T>& v, TensorT&& g);

  GradientSet<T> backward(const Var<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }

 private:
  struct Node {
    TensorT value;
    std::optional<TensorT> grad;
    std::string op;
    std::string leaf_name;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::vector<Node> nodes_;
};

template <typename T>
Tape<T>& Var<T>::tape() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return *tape_;
}

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape().value(*this);
}

/// Binds every entry of `params` as a named leaf (or constant when !trainable).
template <typename T>
std::map<std::string, Var<T>> bind_parameters(Tape<T>& tape, const ParameterSet<T>& params,
                                              bool trainable = true);

// ---- differentiable ops -------------------------------------------------

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
/// x:[m,n] + bias broadcast over rows; bias has n elements.
template <typename T> Var<T> add_row_bias(const Var<T>& x, const Var<T>& bias);
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// a * b^T
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> silu(const Var<T>& a);
template <typename T> Var<T> softplus(const Var<T>& a);
/// -exp(a), used to keep state matrices strictly negative.
template <typename T> Var<T> neg_exp(const Var<T>& a);
/// Row-wise layer normalization of x:[m,n] with affine gamma, beta of n elements.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));
/// Depthwise causal convolution over rows: x:[len,ch], w:[ch,k], b:[ch].
/// y[t,c] = b[c] + sum_j w[c,j] * x[t-k+1+j, c], zero-padded on the left.
template <typename T> Var<T> causal_conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b);
/// out[i] = x[order[i]] over rows of x:[len,n].
template <typename T> Var<T> permute_rows(const Var<T>& x, const std::vector<std::size_t>& order);
template <typename T> Var<T> concat_rows(const Var<T>& a, const Var<T>& b);
/// Row i of x as a [1,n] tensor.
template <typename T> Var<T> slice_row(const Var<T>& x, std::size_t row);
template <typename T> Var<T> mean_rows(const Var<T>& x);
/// Cross-entropy of softmax(logits) against (1-eps)*onehot(label) + eps/K.
template <typename T>
Var<T> smoothed_cross_entropy(const Var<T>& logits, std::size_t label, T eps);

// ---- scalar helpers shared with the non-tape kernels ---------------------

template <typename T> T softplus_scalar(T x);
template <typename T> T sigmoid_scalar(T x);

}  // namespace vmamba::ad
