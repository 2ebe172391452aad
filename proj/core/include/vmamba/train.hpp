#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vmamba/model.hpp"

namespace vmamba::train {

enum class Direction : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr std::size_t kNumDirections = 4;

std::string to_string(Direction d);
/// up <-> down, left <-> right.
Direction reversed(Direction d);

struct DatasetConfig {
  std::size_t train_samples = 2000;
  std::size_t eval_samples = 400;
  std::size_t frames = 8;
  std::size_t size = 32;
  std::size_t bar = 4;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticSample {
  Tensor clip;  // (1, T, S, S)
  std::size_t label = 0;
  std::uint64_t seed = 0;
};

/// Background level before noise; the bar is drawn at 1.
inline constexpr double kBackgroundLevel = 0.25;

/// Renders a clip whose bar_size x bar_size bar starts with its top-left
/// corner at (row0, col0) and moves one pixel per frame. noise holds raw
/// standard-normal draws of shape (T, S, S), scaled by noise_std and clamped
/// to [0, 1] around the background level.
Tensor render_clip(Direction dir, std::size_t row0, std::size_t col0, std::size_t bar_size, const Tensor& noise,
                   double noise_std);

/// Balanced, seeded dataset; label i % 4 for sample i.
std::vector<SyntheticSample> gen_dataset(std::size_t n_samples, std::size_t frames, std::size_t size,
                                         double noise_std, std::uint64_t seed, std::size_t bar_size = 4);

/// Clip frames in the given order; order[i] is the source frame of frame i.
struct DatasetSplits {
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> eval;
};

/// Train split from cfg.seed, eval split from cfg.seed + 1.
DatasetSplits make_splits(const DatasetConfig& cfg);

template <typename T>
BasicTensor<T> reorder_frames(const BasicTensor<T>& clip, const std::vector<std::size_t>& order);
template <typename T>
BasicTensor<T> reverse_frames(const BasicTensor<T>& clip);

void save_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> load_dataset(const std::filesystem::path& dir);

/// -sum_c q_c log softmax(logits)_c with q = (1-eps) onehot + eps/K.
double smoothed_ce(std::span<const double> logits, std::size_t label, double eps);
/// Loss of the smoothed target against itself, the minimum of smoothed_ce.
double smoothed_ce_floor(std::size_t num_classes, double eps);

struct TrainConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.05;
  std::size_t warmup_epochs = 5;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;
  /// Worker threads; 0 uses VMAMBA_THREADS or the hardware count.
  std::size_t threads = 0;

  void validate() const;
};

/// Linear warmup (lr * (step + 1) / warmup_steps) followed by cosine decay to 0
/// at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr);

/// Names excluded from weight decay: vectors, positional tables, class token
/// and the state matrix logarithm.
bool decays(const std::string& name, const Shape& shape);

class AdamW {
 public:
  AdamW(const TrainConfig& cfg, const ad::ParameterSet<float>& params);
  void step(ad::ParameterSet<float>& params, const ad::GradientSet<float>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0;
  double eval_acc = 0;
  double lr = 0;
};

struct TrainResult {
  ad::ParameterSet<float> weights;
  std::vector<EpochMetrics> metrics;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, ad::ParameterSet<float> last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const ad::ParameterSet<float>& last_good() const { return last_good_; }

 private:
  ad::ParameterSet<float> last_good_;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

std::size_t resolve_threads(std::size_t requested);

/// Mean smoothed cross-entropy and its gradient over `samples`, reduced in
/// sample order so the result does not depend on the thread count.
std::pair<double, ad::GradientSet<float>> batch_gradient(const model::ModelConfig& cfg,
                                                         const ad::ParameterSet<float>& weights,
                                                         const std::vector<const SyntheticSample*>& samples,
                                                         double label_smoothing, std::size_t threads);

TrainResult train(const model::ModelConfig& cfg, const std::vector<SyntheticSample>& train_set,
                  const std::vector<SyntheticSample>& eval_set, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

struct EvalOptions {
  order::FrameStrategy frames = order::FrameStrategy::kSequential;
  /// Reverse every clip in time and swap its label to the opposite direction.
  bool reverse_with_label_swap = false;
  std::size_t threads = 0;
};

double evaluate(const ad::ParameterSet<float>& weights, const model::ModelConfig& cfg,
                const std::vector<SyntheticSample>& data, const EvalOptions& options = {});

std::string metrics_csv(const std::vector<EpochMetrics>& metrics);

}  // namespace vmamba::train
