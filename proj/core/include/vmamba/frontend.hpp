#pragma once

// Video tokenizer and positional embeddings. Clips are channels-first
// (C, T, H, W); tokens come out in canonical t-major order, one row each.

#include <cstddef>
#include <random>
#include <string>
#include <string_view>

#include "vmamba/scan_order.hpp"
#include "vmamba/tensor.hpp"

namespace vmamba::video {

using order::TubeletGrid;

struct TubeletSpec {
  std::size_t st = 2;
  std::size_t sh = 16;
  std::size_t sw = 16;
  std::size_t volume() const { return st * sh * sw; }
  friend bool operator==(const TubeletSpec&, const TubeletSpec&) = default;
};

/// Floor division of the clip extents; remainders are dropped.
TubeletGrid tubelet_grid(const Shape& clip_shape, const TubeletSpec& spec);

/// Rows of raw tubelet pixels, shape (n, C*st*sh*sw), flattened in (c, dt, dh, dw) order.
template <typename T>
BasicTensor<T> extract_tubelets(const BasicTensor<T>& clip, const TubeletSpec& spec);

/// Strided 3D convolution. w3d: (d, C, st, sh, sw), bias: (d). Returns (n, d).
template <typename T>
BasicTensor<T> tokenize(const BasicTensor<T>& clip, const BasicTensor<T>& w3d, const BasicTensor<T>& bias);

/// Image patch embedding. image: (C, H, W), w2d: (d, C, sh, sw). Returns (nh*nw, d).
template <typename T>
BasicTensor<T> tokenize_image(const BasicTensor<T>& image, const BasicTensor<T>& w2d, const BasicTensor<T>& bias);

/// Repeats w2d along a new temporal axis and divides by st.
template <typename T>
BasicTensor<T> inflate_2d_to_3d(const BasicTensor<T>& w2d, std::size_t st);

enum class PeMode { kNone, kSinusoid, kLearnable };
enum class PeInit { kExpand, kInterpSpatial, kInterpEmbed, kRandom };

PeMode parse_pe_mode(std::string_view name);
std::string to_string(PeMode m);
PeInit parse_pe_init(std::string_view name);
std::string to_string(PeInit i);

template <typename T>
struct PosEmbed {
  PeMode mode = PeMode::kNone;
  PeInit init = PeInit::kRandom;
  BasicTensor<T> table;  // (n, d)
};

/// P[p, 2i] = sin(p / 10000^(2i/d)), P[p, 2i+1] = cos(same). d must be even.
template <typename T>
PosEmbed<T> sinusoid_pos_embed(const TubeletGrid& g, std::size_t d);

/// Learnable table initialized from an image table p_image of shape (nh*nw, d).
/// For kRandom p_image only supplies d.
template <typename T>
PosEmbed<T> init_pos_embed(PeInit method, const BasicTensor<T>& p_image, const TubeletGrid& g,
                           std::mt19937_64& rng);

/// Align-corners linear resampling of `src` (length m) to length `out_len`.
template <typename T>
std::vector<T> linear_resample(std::span<const T> src, std::size_t out_len);

}  // namespace vmamba::video
