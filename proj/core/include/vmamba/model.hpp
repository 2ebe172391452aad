#pragma once

// Bidirectional spatio-temporal Mamba encoder.
//
// Parameter names (d = dim, e = 2d, N = state size, R = dt rank, K = conv kernel):
//   tokenizer.weight (d,C,st,sh,sw)  tokenizer.bias (d)
//   pos_embed (n,d)                  only for learnable PE
//   cls_token (1,d)  cls_pos (1,d)   only with a class token
//   blocks.<i>.norm.weight / .bias (d)
//   blocks.<i>.in_proj (d,e)  blocks.<i>.gate_proj (d,e)  blocks.<i>.out_proj (e,d)
//   blocks.<i>.conv.weight (e,K)  blocks.<i>.conv.bias (e)
//   blocks.<i>.<fwd|bwd>.a_log (e,N) .d (e) .w_b (e,N) .w_c (e,N)
//                        .w_dt_down (e,R) .w_dt_up (R,e) .b_dt (e)
//   norm_f.weight / .bias (d)  head.weight (d,K)  head.bias (K)

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vmamba/autodiff.hpp"
#include "vmamba/frontend.hpp"
#include "vmamba/scan_order.hpp"
#include "vmamba/ssm.hpp"

namespace vmamba::model {

struct ModelConfig {
  std::size_t depth = 24;
  std::size_t dim = 384;
  std::size_t state_size = 16;
  std::size_t dt_rank = 0;  // 0 selects ceil(dim / 16)
  std::size_t conv_kernel = 4;
  video::TubeletSpec tubelet{2, 16, 16};
  std::size_t channels = 3;
  std::size_t frames = 16;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t num_classes = 400;
  video::PeMode pe_mode = video::PeMode::kLearnable;
  video::PeInit pe_init = video::PeInit::kRandom;
  order::BackwardStrategy backward = order::BackwardStrategy::kSpatioTemporal;
  bool class_token = true;
  ssm::Discretization discretization = ssm::Discretization::kExactZoh;

  std::size_t inner_dim() const { return 2 * dim; }
  std::size_t resolved_dt_rank() const { return dt_rank != 0 ? dt_rank : (dim + 15) / 16; }
  Shape clip_shape() const { return {channels, frames, height, width}; }
  order::TubeletGrid grid() const;
  std::size_t video_tokens() const { return grid().tokens(); }
  std::size_t sequence_length() const { return video_tokens() + (class_token ? 1 : 0); }
  void validate() const;
};

/// Desk-scale configuration for the synthetic direction task (mean pooling, no class token).
ModelConfig toy_config();
/// Large configuration with the given frame count and width.
ModelConfig reference_config(std::size_t frames, std::size_t dim);

/// Names and shapes of every weight tensor, in a fixed order.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& cfg);

template <typename T>
ad::ParameterSet<T> init_weights(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
using VarMap = std::map<std::string, ad::Var<T>>;

/// Forward-path step sizes recorded per layer, each (len, e).
template <typename T>
struct DeltaTrace {
  std::vector<BasicTensor<T>> forward_delta;
};

/// One selective scan direction over a (len, e) sequence using the
/// parameters under `prefix` (e.g. "blocks.0.fwd").
template <typename T>
ad::Var<T> selective_direction(const ad::Var<T>& x, const VarMap<T>& vars, const std::string& prefix,
                               ssm::Discretization mode, DeltaTrace<T>* trace = nullptr);

/// Forward scan in canonical order plus a backward scan under `backward`
/// (a permutation of the full sequence), un-permuted and summed.
template <typename T>
ad::Var<T> st_ssm(const ad::Var<T>& x, const VarMap<T>& vars, const std::string& block_prefix,
                  const order::ScanPermutation& backward, ssm::Discretization mode,
                  DeltaTrace<T>* trace = nullptr);

template <typename T>
ad::Var<T> encoder_block(const ad::Var<T>& x, const VarMap<T>& vars, const std::string& block_prefix,
                         const order::ScanPermutation& backward, ssm::Discretization mode,
                         DeltaTrace<T>* trace = nullptr);

/// Backward permutation over the whole sequence, class token included.
order::ScanPermutation sequence_backward_order(const ModelConfig& cfg);

/// Logits of shape (1, num_classes).
template <typename T>
ad::Var<T> model_forward(ad::Tape<T>& tape, const BasicTensor<T>& clip, const ModelConfig& cfg,
                         const VarMap<T>& vars, DeltaTrace<T>* trace = nullptr);

/// Inference without gradients.
template <typename T>
BasicTensor<T> predict_logits(const BasicTensor<T>& clip, const ModelConfig& cfg, const ad::ParameterSet<T>& weights);

/// Channel-averaged forward-path step sizes per video token, shape (L, nt, nh, nw).
template <typename T>
BasicTensor<T> extract_delta_maps(const BasicTensor<T>& clip, const ModelConfig& cfg,
                                  const ad::ParameterSet<T>& weights);

}  // namespace vmamba::model
