#include "vmamba/scan_order.hpp"

#include <algorithm>
#include <numeric>

namespace vmamba::order {

void TubeletGrid::validate() const {
  if (nt == 0 || nh == 0 || nw == 0) {
    throw ContractError("token grid extents must be positive");
  }
}

ScanPermutation::ScanPermutation(std::vector<std::size_t> order) : order_(std::move(order)) {
  const std::size_t n = order_.size();
  inverse_.assign(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t v = order_[i];
    if (v >= n || inverse_[v] != n) throw ContractError("scan order is not a permutation");
    inverse_[v] = i;
  }
}

ScanPermutation ScanPermutation::identity(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  return ScanPermutation(std::move(order));
}

ScanPermutation ScanPermutation::after(const ScanPermutation& first) const {
  if (first.size() != size()) throw ShapeError("cannot compose permutations of different lengths");
  // apply(apply(x, first), this)[i] = x[first[this[i]]]
  std::vector<std::size_t> composed(size());
  for (std::size_t i = 0; i < size(); ++i) composed[i] = first.order_[order_[i]];
  return ScanPermutation(std::move(composed));
}

bool ScanPermutation::is_identity() const {
  for (std::size_t i = 0; i < order_.size(); ++i)
    if (order_[i] != i) return false;
  return true;
}

BackwardStrategy parse_backward_strategy(std::string_view name) {
  if (name == "st-reverse") return BackwardStrategy::kSpatioTemporal;
  if (name == "spatial-reverse") return BackwardStrategy::kSpatial;
  if (name == "temporal-reverse") return BackwardStrategy::kTemporal;
  throw ContractError("unknown backward scan strategy '" + std::string(name) + "'");
}

std::string to_string(BackwardStrategy s) {
  switch (s) {
    case BackwardStrategy::kSpatioTemporal: return "st-reverse";
    case BackwardStrategy::kSpatial: return "spatial-reverse";
    case BackwardStrategy::kTemporal: return "temporal-reverse";
  }
  throw ContractError("unknown backward scan strategy");
}

FrameStrategy parse_frame_strategy(std::string_view name) {
  if (name == "sequential") return FrameStrategy::kSequential;
  if (name == "interleaved") return FrameStrategy::kInterleaved;
  if (name == "pairwise") return FrameStrategy::kPairwise;
  if (name == "blockwise") return FrameStrategy::kBlockwise;
  throw ContractError("unknown frame reordering strategy '" + std::string(name) + "'");
}

std::string to_string(FrameStrategy s) {
  switch (s) {
    case FrameStrategy::kSequential: return "sequential";
    case FrameStrategy::kInterleaved: return "interleaved";
    case FrameStrategy::kPairwise: return "pairwise";
    case FrameStrategy::kBlockwise: return "blockwise";
  }
  throw ContractError("unknown frame reordering strategy");
}

ScanPermutation forward_order(const TubeletGrid& g) {
  g.validate();
  return ScanPermutation::identity(g.tokens());
}

ScanPermutation backward_order(const TubeletGrid& g, BackwardStrategy strategy) {
  g.validate();
  const std::size_t n = g.tokens(), per_frame = g.tokens_per_frame();
  std::vector<std::size_t> order(n);
  for (std::size_t t = 0; t < g.nt; ++t) {
    for (std::size_t s = 0; s < per_frame; ++s) {
      const std::size_t i = t * per_frame + s;
      switch (strategy) {
        case BackwardStrategy::kSpatioTemporal:
          order[i] = n - 1 - i;
          break;
        case BackwardStrategy::kSpatial:
          order[i] = t * per_frame + (per_frame - 1 - s);
          break;
        case BackwardStrategy::kTemporal:
          order[i] = (g.nt - 1 - t) * per_frame + s;
          break;
      }
    }
  }
  return ScanPermutation(std::move(order));
}

ScanPermutation forward_with_class_token(const ScanPermutation& video) {
  std::vector<std::size_t> order{0};
  for (auto i : video.order()) order.push_back(i + 1);
  return ScanPermutation(std::move(order));
}

ScanPermutation backward_with_class_token(const ScanPermutation& video) {
  std::vector<std::size_t> order;
  order.reserve(video.size() + 1);
  for (auto i : video.order()) order.push_back(i + 1);
  order.push_back(0);
  return ScanPermutation(std::move(order));
}

template <typename T>
BasicTensor<T> apply_permutation(const BasicTensor<T>& tokens, const ScanPermutation& p) {
  if (tokens.rank() != 2) throw ShapeError("apply_permutation: tokens must be rank 2");
  const std::size_t len = tokens.dim(0), d = tokens.dim(1);
  if (len != p.size()) {
    throw ShapeError("apply_permutation: " + std::to_string(len) + " tokens vs permutation of " +
                     std::to_string(p.size()));
  }
  BasicTensor<T> out(tokens.shape());
  for (std::size_t i = 0; i < len; ++i) {
    std::copy_n(tokens.data().begin() + p.order()[i] * d, d, out.data().begin() + i * d);
  }
  return out;
}

template BasicTensor<float> apply_permutation(const BasicTensor<float>&, const ScanPermutation&);
template BasicTensor<double> apply_permutation(const BasicTensor<double>&, const ScanPermutation&);
template BasicTensor<long double> apply_permutation(const BasicTensor<long double>&, const ScanPermutation&);

std::vector<std::size_t> frame_reorder(std::size_t frames, FrameStrategy strategy) {
  if (frames < 2) throw ContractError("frame reordering needs at least 2 frames");
  const bool needs_even = strategy == FrameStrategy::kPairwise || strategy == FrameStrategy::kBlockwise;
  if (needs_even && frames % 2 != 0) {
    throw ContractError(to_string(strategy) + " reordering needs an even frame count");
  }
  std::vector<std::size_t> order;
  order.reserve(frames);
  switch (strategy) {
    case FrameStrategy::kSequential:
      for (std::size_t i = 0; i < frames; ++i) order.push_back(i);
      break;
    case FrameStrategy::kInterleaved:
      // 0, T-1, 1, T-2, ...
      for (std::size_t lo = 0, hi = frames - 1; order.size() < frames; ++lo, --hi) {
        order.push_back(lo);
        if (order.size() < frames) order.push_back(hi);
      }
      break;
    case FrameStrategy::kPairwise: {
      // First pair in place, remaining pairs in reverse order.
      const std::size_t pairs = frames / 2;
      order = {0, 1};
      for (std::size_t p = pairs; p-- > 1;) {
        order.push_back(2 * p);
        order.push_back(2 * p + 1);
      }
      break;
    }
    case FrameStrategy::kBlockwise:
      for (std::size_t i = frames / 2; i < frames; ++i) order.push_back(i);
      for (std::size_t i = 0; i < frames / 2; ++i) order.push_back(i);
      break;
  }
  return order;
}

}  // namespace vmamba::order
