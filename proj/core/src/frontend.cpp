#include "vmamba/frontend.hpp"

#include <cmath>

namespace vmamba::video {

namespace {

void require_clip(const Shape& s) {
  if (s.size() != 4) throw ShapeError("video clip must be (C, T, H, W), got " + shape_to_string(s));
}

}  // namespace

TubeletGrid tubelet_grid(const Shape& clip_shape, const TubeletSpec& spec) {
  require_clip(clip_shape);
  if (spec.st == 0 || spec.sh == 0 || spec.sw == 0) throw ContractError("tubelet extents must be positive");
  const std::size_t t = clip_shape[1], h = clip_shape[2], w = clip_shape[3];
  if (spec.st > t || spec.sh > h || spec.sw > w) {
    throw ContractError("tubelet (" + std::to_string(spec.st) + "," + std::to_string(spec.sh) + "," +
                        std::to_string(spec.sw) + ") exceeds clip " + shape_to_string(clip_shape));
  }
  return TubeletGrid{t / spec.st, h / spec.sh, w / spec.sw};
}

template <typename T>
BasicTensor<T> extract_tubelets(const BasicTensor<T>& clip, const TubeletSpec& spec) {
  const TubeletGrid g = tubelet_grid(clip.shape(), spec);
  const std::size_t C = clip.dim(0), H = clip.dim(2), W = clip.dim(3);
  const std::size_t frame = H * W, chan = clip.dim(1) * frame;
  const std::size_t row_len = C * spec.volume();
  BasicTensor<T> out({g.tokens(), row_len});
  const auto src = clip.data();
  auto dst = out.data().begin();
  for (std::size_t t = 0; t < g.nt; ++t)
    for (std::size_t h = 0; h < g.nh; ++h)
      for (std::size_t w = 0; w < g.nw; ++w)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dt = 0; dt < spec.st; ++dt)
            for (std::size_t dh = 0; dh < spec.sh; ++dh) {
              const std::size_t base =
                  c * chan + (t * spec.st + dt) * frame + (h * spec.sh + dh) * W + w * spec.sw;
              dst = std::copy_n(src.begin() + base, spec.sw, dst);
            }
  return out;
}

template <typename T>
BasicTensor<T> tokenize(const BasicTensor<T>& clip, const BasicTensor<T>& w3d, const BasicTensor<T>& bias) {
  if (w3d.rank() != 5) throw ShapeError("tokenize: weight must be (d, C, st, sh, sw)");
  require_clip(clip.shape());
  if (w3d.dim(1) != clip.dim(0)) {
    throw ShapeError("tokenize: weight has " + std::to_string(w3d.dim(1)) + " input channels, clip has " +
                     std::to_string(clip.dim(0)));
  }
  const std::size_t d = w3d.dim(0);
  if (bias.size() != d) throw ShapeError("tokenize: bias length must equal embedding dim");
  const TubeletSpec spec{w3d.dim(2), w3d.dim(3), w3d.dim(4)};
  const BasicTensor<T> patches = extract_tubelets(clip, spec);
  BasicTensor<T> tokens = matmul_nt(patches, w3d.reshaped({d, w3d.size() / d}));
  for (std::size_t i = 0; i < tokens.dim(0); ++i)
    for (std::size_t o = 0; o < d; ++o) tokens.at(i, o) += bias[o];
  return tokens;
}

template <typename T>
BasicTensor<T> tokenize_image(const BasicTensor<T>& image, const BasicTensor<T>& w2d, const BasicTensor<T>& bias) {
  if (image.rank() != 3) throw ShapeError("tokenize_image: image must be (C, H, W)");
  if (w2d.rank() != 4) throw ShapeError("tokenize_image: weight must be (d, C, sh, sw)");
  const Shape& s = w2d.shape();
  return tokenize(image.reshaped({image.dim(0), 1, image.dim(1), image.dim(2)}),
                  w2d.reshaped({s[0], s[1], 1, s[2], s[3]}), bias);
}

template <typename T>
BasicTensor<T> inflate_2d_to_3d(const BasicTensor<T>& w2d, std::size_t st) {
  if (w2d.rank() != 4) throw ShapeError("inflate_2d_to_3d: weight must be (d, C, sh, sw)");
  if (st == 0) throw ContractError("inflate_2d_to_3d: st must be positive");
  const Shape& s = w2d.shape();
  const std::size_t plane = s[2] * s[3], outer = s[0] * s[1];
  BasicTensor<T> out({s[0], s[1], st, s[2], s[3]});
  const T inv = T(1) / static_cast<T>(st);
  for (std::size_t oc = 0; oc < outer; ++oc)
    for (std::size_t t = 0; t < st; ++t)
      for (std::size_t k = 0; k < plane; ++k) out[(oc * st + t) * plane + k] = w2d[oc * plane + k] * inv;
  return out;
}

PeMode parse_pe_mode(std::string_view name) {
  if (name == "none") return PeMode::kNone;
  if (name == "sinusoid") return PeMode::kSinusoid;
  if (name == "learnable") return PeMode::kLearnable;
  throw ContractError("unknown positional embedding mode '" + std::string(name) + "'");
}

std::string to_string(PeMode m) {
  switch (m) {
    case PeMode::kNone: return "none";
    case PeMode::kSinusoid: return "sinusoid";
    case PeMode::kLearnable: return "learnable";
  }
  throw ContractError("unknown positional embedding mode");
}

PeInit parse_pe_init(std::string_view name) {
  if (name == "expand") return PeInit::kExpand;
  if (name == "interp-spatial") return PeInit::kInterpSpatial;
  if (name == "interp-embed") return PeInit::kInterpEmbed;
  if (name == "random") return PeInit::kRandom;
  throw ContractError("unknown positional embedding init '" + std::string(name) + "'");
}

std::string to_string(PeInit i) {
  switch (i) {
    case PeInit::kExpand: return "expand";
    case PeInit::kInterpSpatial: return "interp-spatial";
    case PeInit::kInterpEmbed: return "interp-embed";
    case PeInit::kRandom: return "random";
  }
  throw ContractError("unknown positional embedding init");
}

template <typename T>
PosEmbed<T> sinusoid_pos_embed(const TubeletGrid& g, std::size_t d) {
  g.validate();
  if (d == 0 || d % 2 != 0) throw ContractError("sinusoid_pos_embed: d must be even and positive");
  const std::size_t n = g.tokens();
  BasicTensor<T> table({n, d});
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(d));
    for (std::size_t p = 0; p < n; ++p) {
      const double angle = static_cast<double>(p) * freq;
      table.at(p, 2 * i) = static_cast<T>(std::sin(angle));
      table.at(p, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return {PeMode::kSinusoid, PeInit::kRandom, std::move(table)};
}

template <typename T>
std::vector<T> linear_resample(std::span<const T> src, std::size_t out_len) {
  if (src.empty() || out_len == 0) throw ContractError("linear_resample: empty input or output");
  const std::size_t m = src.size();
  std::vector<T> out(out_len);
  if (m == 1 || out_len == 1) {
    std::fill(out.begin(), out.end(), src[0]);
    return out;
  }
  for (std::size_t i = 0; i < out_len; ++i) {
    const std::size_t num = i * (m - 1), den = out_len - 1;
    const std::size_t i0 = num / den;
    const std::size_t rem = num % den;
    if (rem == 0) {
      out[i] = src[i0];
      continue;
    }
    const double frac = static_cast<double>(rem) / static_cast<double>(den);
    out[i] = static_cast<T>((1.0 - frac) * static_cast<double>(src[i0]) + frac * static_cast<double>(src[i0 + 1]));
  }
  return out;
}

template <typename T>
PosEmbed<T> init_pos_embed(PeInit method, const BasicTensor<T>& p_image, const TubeletGrid& g,
                           std::mt19937_64& rng) {
  g.validate();
  if (p_image.rank() != 2) throw ShapeError("init_pos_embed: p_image must be (nh*nw, d)");
  const std::size_t m = g.tokens_per_frame(), d = p_image.dim(1), n = g.tokens();
  if (method != PeInit::kRandom && p_image.dim(0) != m) {
    throw ShapeError("init_pos_embed: p_image has " + std::to_string(p_image.dim(0)) + " rows, grid frame has " +
                     std::to_string(m) + " tokens");
  }
  BasicTensor<T> table({n, d});
  switch (method) {
    case PeInit::kExpand:
      for (std::size_t t = 0; t < g.nt; ++t)
        std::copy(p_image.data().begin(), p_image.data().end(), table.data().begin() + t * m * d);
      break;
    case PeInit::kInterpSpatial: {
      std::vector<T> column(m);
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t s = 0; s < m; ++s) column[s] = p_image.at(s, j);
        const auto res = linear_resample<T>(column, n);
        for (std::size_t p = 0; p < n; ++p) table.at(p, j) = res[p];
      }
      break;
    }
    case PeInit::kInterpEmbed:
      // Row s stretched to d*nt values; chunk t becomes the embedding of token (t, s).
      for (std::size_t s = 0; s < m; ++s) {
        const auto row = linear_resample<T>(p_image.data().subspan(s * d, d), d * g.nt);
        for (std::size_t t = 0; t < g.nt; ++t)
          std::copy_n(row.begin() + t * d, d, table.data().begin() + (t * m + s) * d);
      }
      break;
    case PeInit::kRandom: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (auto& v : table.data()) v = static_cast<T>(dist(rng));
      break;
    }
  }
  return {PeMode::kLearnable, method, std::move(table)};
}

#define VMAMBA_FRONTEND_INSTANTIATE(T)                                                                   \
  template BasicTensor<T> extract_tubelets(const BasicTensor<T>&, const TubeletSpec&);                 \
  template BasicTensor<T> tokenize(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> tokenize_image(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                         const BasicTensor<T>&);                                         \
  template BasicTensor<T> inflate_2d_to_3d(const BasicTensor<T>&, std::size_t);                         \
  template PosEmbed<T> sinusoid_pos_embed(const TubeletGrid&, std::size_t);                             \
  template std::vector<T> linear_resample(std::span<const T>, std::size_t);                             \
  template PosEmbed<T> init_pos_embed(PeInit, const BasicTensor<T>&, const TubeletGrid&, std::mt19937_64&);

VMAMBA_FRONTEND_INSTANTIATE(float)
VMAMBA_FRONTEND_INSTANTIATE(double)
VMAMBA_FRONTEND_INSTANTIATE(long double)

}  // namespace vmamba::video
