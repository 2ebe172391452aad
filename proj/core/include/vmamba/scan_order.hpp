#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmamba/tensor.hpp"

namespace vmamba::order {

/// Token counts along time, height and width.
struct TubeletGrid {
  std::size_t nt = 1;
  std::size_t nh = 1;
  std::size_t nw = 1;

  std::size_t tokens() const { return nt * nh * nw; }
  std::size_t tokens_per_frame() const { return nh * nw; }
  /// Canonical t-major flat index.
  std::size_t index(std::size_t t, std::size_t h, std::size_t w) const { return (t * nh + h) * nw + w; }
  void validate() const;

  friend bool operator==(const TubeletGrid&, const TubeletGrid&) = default;
};

/// A bijection on [0, n). Applying it to a sequence x yields out[i] = x[order[i]].
class ScanPermutation {
 public:
  /// Throws ContractError unless `order` is a permutation of [0, n).
  explicit ScanPermutation(std::vector<std::size_t> order);
  static ScanPermutation identity(std::size_t n);

  const std::vector<std::size_t>& order() const { return order_; }
  const std::vector<std::size_t>& inverse() const { return inverse_; }
  std::size_t size() const { return order_.size(); }

  ScanPermutation inverted() const { return ScanPermutation(inverse_); }
  /// Applying the result equals applying `first` and then `*this`.
  ScanPermutation after(const ScanPermutation& first) const;
  bool is_identity() const;

  friend bool operator==(const ScanPermutation& a, const ScanPermutation& b) { return a.order_ == b.order_; }

 private:
  std::vector<std::size_t> order_;
  std::vector<std::size_t> inverse_;
};

enum class BackwardStrategy { kSpatioTemporal, kSpatial, kTemporal };
enum class FrameStrategy { kSequential, kInterleaved, kPairwise, kBlockwise };

/// "st-reverse", "spatial-reverse", "temporal-reverse".
BackwardStrategy parse_backward_strategy(std::string_view name);
std::string to_string(BackwardStrategy s);
/// "sequential", "interleaved", "pairwise", "blockwise".
FrameStrategy parse_frame_strategy(std::string_view name);
std::string to_string(FrameStrategy s);

ScanPermutation forward_order(const TubeletGrid& g);
ScanPermutation backward_order(const TubeletGrid& g, BackwardStrategy strategy);

/// Lifts a video-token permutation to a sequence with a class token at index 0
/// of the canonical order. In the forward direction the class token stays
/// first; in the backward direction it is scanned last, mirroring its forward
/// position, so that the backward pass reaches it after every video token.
ScanPermutation forward_with_class_token(const ScanPermutation& video);
ScanPermutation backward_with_class_token(const ScanPermutation& video);

template <typename V>
std::vector<V> apply_permutation(std::span<const V> tokens, const ScanPermutation& p) {
  if (tokens.size() != p.size()) {
    throw ShapeError("apply_permutation: " + std::to_string(tokens.size()) + " tokens vs permutation of " +
                     std::to_string(p.size()));
  }
  std::vector<V> out;
  out.reserve(tokens.size());
  for (auto i : p.order()) out.push_back(tokens[i]);
  return out;
}

/// Row permutation of a rank-2 token matrix.
template <typename T>
BasicTensor<T> apply_permutation(const BasicTensor<T>& tokens, const ScanPermutation& p);

/// 0-based frame order for T frames. Pairwise and blockwise need even T.
std::vector<std::size_t> frame_reorder(std::size_t frames, FrameStrategy strategy);

}  // namespace vmamba::order
