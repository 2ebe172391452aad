#include "vmamba/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "vmamba/serialize.hpp"

namespace vmamba::train {

std::string to_string(Direction d) {
  switch (d) {
    case Direction::kUp: return "up";
    case Direction::kDown: return "down";
    case Direction::kLeft: return "left";
    case Direction::kRight: return "right";
  }
  throw ContractError("unknown direction");
}

Direction reversed(Direction d) {
  switch (d) {
    case Direction::kUp: return Direction::kDown;
    case Direction::kDown: return Direction::kUp;
    case Direction::kLeft: return Direction::kRight;
    case Direction::kRight: return Direction::kLeft;
  }
  throw ContractError("unknown direction");
}

namespace {

// Per-frame displacement (rows, cols).
std::pair<long, long> velocity(Direction d) {
  switch (d) {
    case Direction::kUp: return {-1, 0};
    case Direction::kDown: return {1, 0};
    case Direction::kLeft: return {0, -1};
    case Direction::kRight: return {0, 1};
  }
  throw ContractError("unknown direction");
}

// Range of valid start coordinates along one axis for a bar moving v per frame.
std::pair<std::size_t, std::size_t> start_range(long v, std::size_t frames, std::size_t size, std::size_t bar) {
  const std::size_t last = size - bar;
  const std::size_t travel = frames - 1;
  if (v < 0) return {travel, last};
  if (v > 0) return {0, last - travel};
  return {0, last};
}

}  // namespace

Tensor render_clip(Direction dir, std::size_t row0, std::size_t col0, std::size_t bar_size, const Tensor& noise,
                   double noise_std) {
  if (noise.rank() != 3 || noise.dim(1) != noise.dim(2)) throw ShapeError("render_clip: noise must be (T, S, S)");
  const std::size_t T = noise.dim(0), S = noise.dim(1);
  const auto [vr, vc] = velocity(dir);
  Tensor clip({1, T, S, S});
  for (std::size_t t = 0; t < T; ++t) {
    const long r = static_cast<long>(row0) + vr * static_cast<long>(t);
    const long c = static_cast<long>(col0) + vc * static_cast<long>(t);
    if (r < 0 || c < 0 || r + static_cast<long>(bar_size) > static_cast<long>(S) ||
        c + static_cast<long>(bar_size) > static_cast<long>(S)) {
      throw ContractError("render_clip: bar leaves the frame at t=" + std::to_string(t));
    }
    for (std::size_t i = 0; i < S; ++i) {
      for (std::size_t j = 0; j < S; ++j) {
        const std::size_t k = (t * S + i) * S + j;
        const bool on_bar = static_cast<long>(i) >= r && static_cast<long>(i) < r + static_cast<long>(bar_size) &&
                            static_cast<long>(j) >= c && static_cast<long>(j) < c + static_cast<long>(bar_size);
        clip[k] = on_bar ? 1.0f
                         : static_cast<float>(std::clamp(kBackgroundLevel + noise_std * noise[k], 0.0, 1.0));
      }
    }
  }
  return clip;
}

std::vector<SyntheticSample> gen_dataset(std::size_t n_samples, std::size_t frames, std::size_t size,
                                         double noise_std, std::uint64_t seed, std::size_t bar_size) {
  if (frames < 4) throw ContractError("gen_dataset: need at least 4 frames");
  if (size < 8) throw ContractError("gen_dataset: frame size must be at least 8");
  if (!(noise_std >= 0)) throw ContractError("gen_dataset: noise_std must be non-negative");
  if (bar_size < 1 || bar_size > size || size - bar_size < frames - 1) {
    throw ContractError("gen_dataset: a bar of size " + std::to_string(bar_size) + " cannot travel " +
                        std::to_string(frames - 1) + " pixels inside a " + std::to_string(size) + " pixel frame");
  }
  std::mt19937_64 master(seed);
  std::vector<SyntheticSample> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::uint64_t sample_seed = master();
    std::mt19937_64 rng(sample_seed);
    const auto dir = static_cast<Direction>(i % kNumDirections);
    const auto [vr, vc] = velocity(dir);
    const auto [rlo, rhi] = start_range(vr, frames, size, bar_size);
    const auto [clo, chi] = start_range(vc, frames, size, bar_size);
    const std::size_t row0 = rlo + static_cast<std::size_t>(rng() % (rhi - rlo + 1));
    const std::size_t col0 = clo + static_cast<std::size_t>(rng() % (chi - clo + 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor noise({frames, size, size});
    for (auto& v : noise.data()) v = static_cast<float>(normal(rng));
    out.push_back({render_clip(dir, row0, col0, bar_size, noise, noise_std), i % kNumDirections, sample_seed});
  }
  return out;
}

DatasetSplits make_splits(const DatasetConfig& cfg) {
  return {gen_dataset(cfg.train_samples, cfg.frames, cfg.size, cfg.noise_std, cfg.seed, cfg.bar),
          gen_dataset(cfg.eval_samples, cfg.frames, cfg.size, cfg.noise_std, cfg.seed + 1, cfg.bar)};
}

template <typename T>
BasicTensor<T> reorder_frames(const BasicTensor<T>& clip, const std::vector<std::size_t>& order) {
  if (clip.rank() != 4) throw ShapeError("reorder_frames: clip must be (C, T, H, W)");
  const std::size_t C = clip.dim(0), frames = clip.dim(1), plane = clip.dim(2) * clip.dim(3);
  if (order.size() != frames) throw ShapeError("reorder_frames: order length must equal the frame count");
  BasicTensor<T> out(clip.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < frames; ++t) {
      if (order[t] >= frames) throw ShapeError("reorder_frames: frame index out of range");
      std::copy_n(clip.data().begin() + (c * frames + order[t]) * plane, plane,
                  out.data().begin() + (c * frames + t) * plane);
    }
  return out;
}

template <typename T>
BasicTensor<T> reverse_frames(const BasicTensor<T>& clip) {
  if (clip.rank() != 4) throw ShapeError("reverse_frames: clip must be (C, T, H, W)");
  std::vector<std::size_t> order(clip.dim(1));
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = order.size() - 1 - t;
  return reorder_frames(clip, order);
}

template BasicTensor<float> reorder_frames(const BasicTensor<float>&, const std::vector<std::size_t>&);
template BasicTensor<double> reorder_frames(const BasicTensor<double>&, const std::vector<std::size_t>&);
template BasicTensor<float> reverse_frames(const BasicTensor<float>&);
template BasicTensor<double> reverse_frames(const BasicTensor<double>&);

void save_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples) {
  std::filesystem::create_directories(dir / "clips");
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw std::runtime_error("cannot write " + (dir / "labels.csv").string());
  labels << "index,file,label,direction,seed\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.vmtb", i);
    save_tensor(dir / "clips" / name, samples[i].clip);
    labels << i << ",clips/" << name << ',' << samples[i].label << ','
           << to_string(static_cast<Direction>(samples[i].label)) << ',' << samples[i].seed << '\n';
  }
}

std::vector<SyntheticSample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw std::runtime_error("cannot read " + (dir / "labels.csv").string());
  std::string line;
  std::getline(labels, line);
  std::vector<SyntheticSample> out;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string index, file, label, direction, seed;
    std::getline(ss, index, ',');
    std::getline(ss, file, ',');
    std::getline(ss, label, ',');
    std::getline(ss, direction, ',');
    std::getline(ss, seed, ',');
    out.push_back({load_tensor_as<float>(dir / file), std::stoul(label), std::stoull(seed)});
  }
  return out;
}

double smoothed_ce(std::span<const double> logits, std::size_t label, double eps) {
  const std::size_t k = logits.size();
  if (label >= k) throw ContractError("smoothed_ce: label out of range");
  if (!(eps >= 0 && eps < 1)) throw ContractError("smoothed_ce: eps must lie in [0, 1)");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  double loss = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double q = (c == label ? 1.0 - eps : 0.0) + eps / static_cast<double>(k);
    loss -= q * (logits[c] - lse);
  }
  return loss;
}

double smoothed_ce_floor(std::size_t num_classes, double eps) {
  const double k = static_cast<double>(num_classes);
  const double on = 1.0 - eps + eps / k, off = eps / k;
  double h = -on * std::log(on);
  if (off > 0) h -= (k - 1) * off * std::log(off);
  return h;
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ContractError("train: lr must be positive");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) throw ContractError("train: label_smoothing must lie in [0, 1)");
  if (batch_size == 0) throw ContractError("train: batch_size must be positive");
  if (epochs == 0) throw ContractError("train: epochs must be positive");
  if (warmup_epochs > epochs) throw ContractError("train: warmup_epochs exceeds epochs");
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr) {
  if (step < warmup_steps) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

bool decays(const std::string& name, const Shape& shape) {
  if (shape.size() < 2) return false;
  if (name == "pos_embed" || name == "cls_token" || name == "cls_pos") return false;
  return !(name.size() >= 5 && name.compare(name.size() - 5, 5, "a_log") == 0);
}

AdamW::AdamW(const TrainConfig& cfg, const ad::ParameterSet<float>& params)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), weight_decay_(cfg.weight_decay) {
  for (const auto& [name, t] : params) {
    m_[name].assign(t.size(), 0.0);
    v_[name].assign(t.size(), 0.0);
  }
}

void AdamW::step(ad::ParameterSet<float>& params, const ad::GradientSet<float>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw ContractError("AdamW: missing gradient for " + name);
    const auto& g = git->second;
    auto& m = m_.at(name);
    auto& v = v_.at(name);
    const double wd = decays(name, p.shape()) ? weight_decay_ : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      const double pi = p[i];
      p[i] = static_cast<float>(pi - lr * (update + wd * pi));
    }
  }
}

std::size_t resolve_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VMAMBA_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

namespace {

// Runs fn(i) for i in [0, count) on `threads` workers; rethrows the first error.
template <typename F>
void parallel_for(std::size_t count, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::pair<double, ad::GradientSet<float>> batch_gradient(const model::ModelConfig& cfg,
                                                         const ad::ParameterSet<float>& weights,
                                                         const std::vector<const SyntheticSample*>& samples,
                                                         double label_smoothing, std::size_t threads) {
  if (samples.empty()) throw ContractError("batch_gradient: empty batch");
  std::vector<double> losses(samples.size());
  std::vector<ad::GradientSet<float>> grads(samples.size());
  parallel_for(samples.size(), resolve_threads(threads), [&](std::size_t i) {
    ad::Tape<float> tape;
    auto vars = ad::bind_parameters(tape, weights, true);
    auto logits = model::model_forward(tape, samples[i]->clip, cfg, vars);
    auto loss = ad::smoothed_cross_entropy(logits, samples[i]->label, static_cast<float>(label_smoothing));
    losses[i] = loss.value()[0];
    grads[i] = tape.backward(loss);
  });
  const float inv = 1.0f / static_cast<float>(samples.size());
  ad::GradientSet<float> total = std::move(grads[0]);
  for (std::size_t i = 1; i < grads.size(); ++i)
    for (auto& [name, g] : total) axpy_inplace(g, 1.0f, grads[i].at(name));
  for (auto& [name, g] : total)
    for (auto& v : g.data()) v *= inv;
  double loss = 0;
  for (double l : losses) loss += l;
  return {loss / static_cast<double>(samples.size()), std::move(total)};
}

TrainResult train(const model::ModelConfig& cfg, const std::vector<SyntheticSample>& train_set,
                  const std::vector<SyntheticSample>& eval_set, const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  cfg.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  for (const auto& s : train_set) {
    if (s.clip.shape() != cfg.clip_shape()) {
      throw ShapeError("train: sample shape " + shape_to_string(s.clip.shape()) + " does not match config " +
                       shape_to_string(cfg.clip_shape()));
    }
    if (s.label >= cfg.num_classes) throw ContractError("train: label exceeds num_classes");
  }
  TrainResult result;
  result.weights = model::init_weights<float>(cfg, tc.seed);
  AdamW opt(tc, result.weights);
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t n = train_set.size();
  const std::size_t per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total_steps = per_epoch * tc.epochs, warmup_steps = per_epoch * tc.warmup_epochs;
  const std::size_t threads = resolve_threads(tc.threads);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0;
    double lr = 0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      std::vector<const SyntheticSample*> batch;
      for (std::size_t i = b * tc.batch_size; i < std::min(n, (b + 1) * tc.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      auto [loss, grads] = batch_gradient(cfg, result.weights, batch, tc.label_smoothing, threads);
      bool finite = std::isfinite(loss);
      for (const auto& [name, g] : grads) finite = finite && g.all_finite();
      if (!finite) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step),
                              result.weights);
      }
      lr = lr_at(step, total_steps, warmup_steps, tc.lr);
      opt.step(result.weights, grads, lr);
      loss_sum += loss * static_cast<double>(batch.size());
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.lr = lr;
    m.eval_acc = eval_set.empty() ? 0.0 : evaluate(result.weights, cfg, eval_set, {.threads = threads});
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

double evaluate(const ad::ParameterSet<float>& weights, const model::ModelConfig& cfg,
                const std::vector<SyntheticSample>& data, const EvalOptions& options) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  const auto frame_order = order::frame_reorder(cfg.frames, options.frames);
  std::vector<char> correct(data.size(), 0);
  parallel_for(data.size(), resolve_threads(options.threads), [&](std::size_t i) {
    Tensor clip = reorder_frames(data[i].clip, frame_order);
    std::size_t label = data[i].label;
    if (options.reverse_with_label_swap) {
      clip = reverse_frames(clip);
      label = static_cast<std::size_t>(reversed(static_cast<Direction>(label)));
    }
    const Tensor logits = model::predict_logits(clip, cfg, weights);
    const auto d = logits.data();
    const auto best = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
    correct[i] = best == label ? 1 : 0;
  });
  std::size_t hits = 0;
  for (char c : correct) hits += static_cast<std::size_t>(c);
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,loss,acc,lr\n";
  for (const auto& m : metrics) os << m.epoch << ',' << m.train_loss << ',' << m.eval_acc << ',' << m.lr << '\n';
  return os.str();
}

}  // namespace vmamba::train
