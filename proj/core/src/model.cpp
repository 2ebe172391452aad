#include "vmamba/model.hpp"

#include <cmath>
#include <random>

namespace vmamba::model {

order::TubeletGrid ModelConfig::grid() const { return video::tubelet_grid(clip_shape(), tubelet); }

void ModelConfig::validate() const {
  if (depth < 1) throw ContractError("model depth must be at least 1");
  if (dim < 2) throw ContractError("model dim must be at least 2");
  if (num_classes < 2) throw ContractError("num_classes must be at least 2");
  if (state_size < 1) throw ContractError("state_size must be at least 1");
  if (conv_kernel < 1) throw ContractError("conv_kernel must be at least 1");
  if (channels < 1) throw ContractError("channels must be at least 1");
  if (pe_mode == video::PeMode::kSinusoid && dim % 2 != 0) {
    throw ContractError("sinusoid positional embedding needs an even dim");
  }
  grid();
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.dim = 32;
  cfg.state_size = 8;
  cfg.tubelet = {2, 8, 8};
  cfg.channels = 1;
  cfg.frames = 8;
  cfg.height = 32;
  cfg.width = 32;
  cfg.num_classes = 4;
  // Mean pooling; a class-token readout trains too slowly at this scale.
  cfg.class_token = false;
  return cfg;
}

ModelConfig reference_config(std::size_t frames, std::size_t dim) {
  ModelConfig cfg;
  cfg.frames = frames;
  cfg.dim = dim;
  return cfg;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim, e = cfg.inner_dim(), N = cfg.state_size, R = cfg.resolved_dt_rank();
  const auto& s = cfg.tubelet;
  std::vector<std::pair<std::string, Shape>> out;
  out.push_back({"tokenizer.weight", {d, cfg.channels, s.st, s.sh, s.sw}});
  out.push_back({"tokenizer.bias", {d}});
  if (cfg.pe_mode == video::PeMode::kLearnable) out.push_back({"pos_embed", {cfg.video_tokens(), d}});
  if (cfg.class_token) {
    out.push_back({"cls_token", {1, d}});
    out.push_back({"cls_pos", {1, d}});
  }
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::string b = "blocks." + std::to_string(i) + ".";
    out.push_back({b + "norm.weight", {d}});
    out.push_back({b + "norm.bias", {d}});
    out.push_back({b + "in_proj", {d, e}});
    out.push_back({b + "gate_proj", {d, e}});
    out.push_back({b + "conv.weight", {e, cfg.conv_kernel}});
    out.push_back({b + "conv.bias", {e}});
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string p = b + dir + ".";
      out.push_back({p + "a_log", {e, N}});
      out.push_back({p + "d", {e}});
      out.push_back({p + "w_b", {e, N}});
      out.push_back({p + "w_c", {e, N}});
      out.push_back({p + "w_dt_down", {e, R}});
      out.push_back({p + "w_dt_up", {R, e}});
      out.push_back({p + "b_dt", {e}});
    }
    out.push_back({b + "out_proj", {e, d}});
  }
  out.push_back({"norm_f.weight", {d}});
  out.push_back({"norm_f.bias", {d}});
  out.push_back({"head.weight", {d, cfg.num_classes}});
  out.push_back({"head.bias", {cfg.num_classes}});
  return out;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
void fill_normal(BasicTensor<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_uniform(BasicTensor<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
ad::ParameterSet<T> init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ad::ParameterSet<T> params;
  for (auto& [name, shape] : parameter_shapes(cfg)) {
    BasicTensor<T> t(shape);
    if (name == "pos_embed") {
      const auto g = cfg.grid();
      BasicTensor<T> p_image({g.tokens_per_frame(), cfg.dim});
      fill_normal(p_image, 0.02, rng);
      t = video::init_pos_embed(cfg.pe_init, p_image, g, rng).table;
    } else if (ends_with(name, "norm.weight") || ends_with(name, "norm_f.weight") || ends_with(name, ".d")) {
      t = BasicTensor<T>(shape, T{1});
    } else if (ends_with(name, "bias")) {
      // zero
    } else if (ends_with(name, "conv.weight")) {
      fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel)), rng);
    } else if (ends_with(name, "a_log")) {
      for (std::size_t c = 0; c < shape[0]; ++c)
        for (std::size_t n = 0; n < shape[1]; ++n) t.at(c, n) = static_cast<T>(std::log(static_cast<double>(n + 1)));
    } else if (ends_with(name, "w_dt_up") || ends_with(name, "in_proj") || ends_with(name, "gate_proj") ||
               ends_with(name, "out_proj") || ends_with(name, "w_b") || ends_with(name, "w_c") ||
               ends_with(name, "w_dt_down") || name == "head.weight") {
      // (fan_in, fan_out) matrices applied as x * W
      fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(shape[0])), rng);
    } else if (name == "tokenizer.weight") {
      fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(shape[1])), rng);
    } else if (ends_with(name, "b_dt")) {
      // softplus^-1 of a step drawn log-uniformly from [1e-3, 1e-1]
      std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
      for (auto& v : t.data()) {
        const double dt = std::exp(u(rng));
        v = static_cast<T>(dt + std::log(-std::expm1(-dt)));
      }
    } else {
      fill_normal(t, 0.02, rng);
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

namespace {

template <typename T>
const ad::Var<T>& param(const VarMap<T>& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw ContractError("missing model parameter '" + name + "'");
  return it->second;
}

}  // namespace

template <typename T>
ad::Var<T> selective_direction(const ad::Var<T>& x, const VarMap<T>& vars, const std::string& prefix,
                               ssm::Discretization mode, DeltaTrace<T>* trace) {
  const auto& p = [&](const char* n) -> const ad::Var<T>& { return param(vars, prefix + "." + n); };
  auto dt_low = ad::matmul(x, p("w_dt_down"));
  auto delta = ad::softplus(ad::add_row_bias(ad::matmul(dt_low, p("w_dt_up")), p("b_dt")));
  if (trace) trace->forward_delta.push_back(delta.value());
  auto b = ad::matmul(x, p("w_b"));
  auto c = ad::matmul(x, p("w_c"));
  auto a = ad::neg_exp(p("a_log"));
  return ssm::scan_op(x, delta, a, b, c, p("d"), mode);
}

template <typename T>
ad::Var<T> st_ssm(const ad::Var<T>& x, const VarMap<T>& vars, const std::string& block_prefix,
                  const order::ScanPermutation& backward, ssm::Discretization mode, DeltaTrace<T>* trace) {
  auto fwd = selective_direction(x, vars, block_prefix + ".fwd", mode, trace);
  auto xb = ad::permute_rows(x, backward.order());
  auto bwd = selective_direction(xb, vars, block_prefix + ".bwd", mode, static_cast<DeltaTrace<T>*>(nullptr));
  return ad::add(fwd, ad::permute_rows(bwd, backward.inverse()));
}

template <typename T>
ad::Var<T> encoder_block(const ad::Var<T>& x, const VarMap<T>& vars, const std::string& block_prefix,
                         const order::ScanPermutation& backward, ssm::Discretization mode, DeltaTrace<T>* trace) {
  const auto& p = [&](const char* n) -> const ad::Var<T>& { return param(vars, block_prefix + "." + n); };
  auto u = ad::layer_norm(x, p("norm.weight"), p("norm.bias"));
  auto a = ad::silu(ad::causal_conv1d(ad::matmul(u, p("in_proj")), p("conv.weight"), p("conv.bias")));
  auto s = st_ssm(a, vars, block_prefix, backward, mode, trace);
  auto gate = ad::silu(ad::matmul(u, p("gate_proj")));
  return ad::add(x, ad::matmul(ad::mul(s, gate), p("out_proj")));
}

order::ScanPermutation sequence_backward_order(const ModelConfig& cfg) {
  auto video = order::backward_order(cfg.grid(), cfg.backward);
  return cfg.class_token ? order::backward_with_class_token(video) : video;
}

template <typename T>
ad::Var<T> model_forward(ad::Tape<T>& tape, const BasicTensor<T>& clip, const ModelConfig& cfg,
                         const VarMap<T>& vars, DeltaTrace<T>* trace) {
  cfg.validate();
  if (clip.shape() != cfg.clip_shape()) {
    throw ShapeError("clip shape " + shape_to_string(clip.shape()) + " does not match config " +
                     shape_to_string(cfg.clip_shape()));
  }
  const std::size_t d = cfg.dim;
  const auto grid = cfg.grid();
  auto patches = tape.constant(video::extract_tubelets(clip, cfg.tubelet));
  const auto& w_tok = param(vars, "tokenizer.weight");
  auto x = ad::add_row_bias(ad::matmul_nt(patches, ad::reshape(w_tok, {d, w_tok.value().size() / d})),
                            param(vars, "tokenizer.bias"));
  switch (cfg.pe_mode) {
    case video::PeMode::kNone:
      break;
    case video::PeMode::kSinusoid:
      x = ad::add(x, tape.constant(video::sinusoid_pos_embed<T>(grid, d).table));
      break;
    case video::PeMode::kLearnable:
      x = ad::add(x, param(vars, "pos_embed"));
      break;
  }
  if (cfg.class_token) x = ad::concat_rows(ad::add(param(vars, "cls_token"), param(vars, "cls_pos")), x);

  const auto backward = sequence_backward_order(cfg);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    x = encoder_block(x, vars, "blocks." + std::to_string(i), backward, cfg.discretization, trace);
  }
  auto pooled = cfg.class_token ? ad::slice_row(x, 0) : ad::mean_rows(x);
  auto normed = ad::layer_norm(pooled, param(vars, "norm_f.weight"), param(vars, "norm_f.bias"));
  return ad::add_row_bias(ad::matmul(normed, param(vars, "head.weight")), param(vars, "head.bias"));
}

template <typename T>
BasicTensor<T> predict_logits(const BasicTensor<T>& clip, const ModelConfig& cfg, const ad::ParameterSet<T>& weights) {
  ad::Tape<T> tape;
  auto vars = ad::bind_parameters(tape, weights, false);
  return model_forward(tape, clip, cfg, vars).value();
}

template <typename T>
BasicTensor<T> extract_delta_maps(const BasicTensor<T>& clip, const ModelConfig& cfg,
                                  const ad::ParameterSet<T>& weights) {
  ad::Tape<T> tape;
  auto vars = ad::bind_parameters(tape, weights, false);
  DeltaTrace<T> trace;
  model_forward(tape, clip, cfg, vars, &trace);
  const auto g = cfg.grid();
  const std::size_t n = g.tokens(), offset = cfg.class_token ? 1 : 0;
  BasicTensor<T> maps({cfg.depth, g.nt, g.nh, g.nw});
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const auto& delta = trace.forward_delta.at(l);
    const std::size_t e = delta.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (std::size_t c = 0; c < e; ++c) acc += static_cast<double>(delta.at(i + offset, c));
      maps[l * n + i] = static_cast<T>(acc / static_cast<double>(e));
    }
  }
  return maps;
}

#define VMAMBA_MODEL_INSTANTIATE(T)                                                                         \
  template ad::ParameterSet<T> init_weights<T>(const ModelConfig&, std::uint64_t);                         \
  template ad::Var<T> selective_direction(const ad::Var<T>&, const VarMap<T>&, const std::string&,         \
                                          ssm::Discretization, DeltaTrace<T>*);                            \
  template ad::Var<T> st_ssm(const ad::Var<T>&, const VarMap<T>&, const std::string&,                      \
                             const order::ScanPermutation&, ssm::Discretization, DeltaTrace<T>*);          \
  template ad::Var<T> encoder_block(const ad::Var<T>&, const VarMap<T>&, const std::string&,               \
                                    const order::ScanPermutation&, ssm::Discretization, DeltaTrace<T>*);   \
  template ad::Var<T> model_forward(ad::Tape<T>&, const BasicTensor<T>&, const ModelConfig&,               \
                                    const VarMap<T>&, DeltaTrace<T>*);                                     \
  template BasicTensor<T> predict_logits(const BasicTensor<T>&, const ModelConfig&,                        \
                                         const ad::ParameterSet<T>&);                                      \
  template BasicTensor<T> extract_delta_maps(const BasicTensor<T>&, const ModelConfig&,                    \
                                             const ad::ParameterSet<T>&);

VMAMBA_MODEL_INSTANTIATE(float)
VMAMBA_MODEL_INSTANTIATE(double)
VMAMBA_MODEL_INSTANTIATE(long double)

}  // namespace vmamba::model
