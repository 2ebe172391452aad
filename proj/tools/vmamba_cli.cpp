#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vmamba/checkpoint.hpp"
#include "vmamba/checks/criteria.hpp"
#include "vmamba/config.hpp"
#include "vmamba/cost.hpp"
#include "vmamba/serialize.hpp"
#include "vmamba/train.hpp"

namespace fs = std::filesystem;
using namespace vmamba;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int verbosity = 0;

void info(const std::string& line) {
  if (verbosity >= 0) std::cerr << line << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg;
    cfg.model = model::toy_config();
    return cfg;
  }
  return load_run_config(path);
}

void apply_seed(RunConfig& cfg, const std::optional<std::uint64_t>& seed) {
  if (!seed) return;
  cfg.train.seed = *seed;
  cfg.data.seed = *seed;
}

std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) ids.push_back(std::stoi(item));
  return ids;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
  std::uint64_t seed = 0;
  std::string out;
  std::string train_config;
  std::string only;
};

int run_check(const CheckArgs& a) {
  checks::CheckOptions opts;
  opts.seed = a.seed;
  if (!a.train_config.empty()) opts.training = load_run_config(a.train_config);
  opts.log = [](const std::string& s) {
    if (verbosity > 0) info(s);
  };

  std::vector<int> ids;
  if (!a.only.empty()) {
    ids = parse_id_list(a.only);
  } else {
    for (const auto& e : checks::registry())
      if (e.id != 10 || opts.training) ids.push_back(e.id);
  }

  std::vector<checks::CriterionResult> results;
  bool ok = true;
  for (int id : ids) {
    const auto& reg = checks::registry();
    if (id < 1 || id > static_cast<int>(reg.size())) throw CLI::ValidationError("--only", "unknown criterion " + std::to_string(id));
    if (id == 10 && !opts.training) throw CLI::ValidationError("--only", "criterion 10 needs --train-config");
    auto r = reg[static_cast<std::size_t>(id - 1)].run(opts);
    std::cout << checks::format_line(r) << std::endl;
    ok = ok && r.passed;
    results.push_back(std::move(r));
  }
  if (!a.out.empty()) write_text(fs::path(a.out) / "report.json", checks::report_json(results, false) + "\n");
  return ok ? 0 : kExitFailure;
}

// ---------------------------------------------------------------------------

int run_flops(const std::string& config, const std::string& convention) {
  const auto cfg = load_run_config(config);
  const auto report = cost::count_flops(cfg.model, cost::parse_flop_convention(convention));
  std::cout << report.to_json() << std::endl;
  return 0;
}

int run_bench(const std::string& sweep, std::size_t dim, std::size_t trials, std::uint64_t seed,
              const std::string& out) {
  cost::ScalingOptions opts;
  opts.dim = dim;
  opts.trials = trials;
  opts.seed = seed;
  std::vector<std::size_t> ns;
  for (int n : parse_id_list(sweep)) {
    if (n <= 0) throw CLI::ValidationError("--sweep", "token counts must be positive");
    ns.push_back(static_cast<std::size_t>(n));
  }
  const auto report = cost::scaling_experiment(ns, opts);
  const std::string csv = report.to_csv();
  std::cout << csv;
  info("slope scan " + fixed(report.slope_scan, 3) + " (R2 " + fixed(report.r2_scan, 3) + "), attention " +
       fixed(report.slope_attn, 3) + " (R2 " + fixed(report.r2_attn, 3) + ")");
  for (const auto& w : report.warnings) info("warning: " + w);
  if (!out.empty()) write_text(fs::path(out) / "scaling.csv", csv);
  return 0;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json strategy_table(const ad::ParameterSet<float>& weights, const model::ModelConfig& cfg,
                                      const std::vector<train::SyntheticSample>& data) {
  nlohmann::ordered_json j;
  for (auto s : {order::FrameStrategy::kSequential, order::FrameStrategy::kBlockwise, order::FrameStrategy::kPairwise,
                 order::FrameStrategy::kInterleaved})
    j[order::to_string(s)] = train::evaluate(weights, cfg, data, {.frames = s});
  j["reversed"] = train::evaluate(weights, cfg, data, {.reverse_with_label_swap = true});
  return j;
}

int run_train(const std::string& config, const std::string& out, const std::optional<std::uint64_t>& seed) {
  auto cfg = load_run_config(config);
  apply_seed(cfg, seed);
  const fs::path dir(out);
  fs::create_directories(dir);

  const auto splits = train::make_splits(cfg.data);
  info("training on " + std::to_string(splits.train.size()) + " clips, evaluating on " +
       std::to_string(splits.eval.size()));
  const auto t0 = std::chrono::steady_clock::now();
  train::TrainResult result;
  try {
    result = train::train(cfg.model, splits.train, splits.eval, cfg.train, [&](const train::EpochMetrics& m) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      info("epoch " + std::to_string(m.epoch) + " loss " + fixed(m.train_loss) + " acc " + fixed(m.eval_acc, 3) +
           " (" + fixed(s, 0) + " s)");
    });
  } catch (const train::DivergenceError& e) {
    save_checkpoint(dir / "last_good", cfg.model, e.last_good());
    throw;
  }

  save_checkpoint(dir / "checkpoint", cfg.model, result.weights);
  write_text(dir / "run_config.json", to_json(cfg) + "\n");
  write_text(dir / "metrics.csv", train::metrics_csv(result.metrics));
  const auto table = strategy_table(result.weights, cfg.model, splits.eval);
  write_text(dir / "eval.json", table.dump(2) + "\n");
  std::cout << table.dump(2) << std::endl;
  return 0;
}

fs::path checkpoint_dir(const std::string& weights) {
  const fs::path p(weights);
  if (fs::exists(p / "checkpoint" / "manifest.txt")) return p / "checkpoint";
  return p;
}

int run_eval(const std::string& weights, const std::string& strategy, const std::string& config,
             const std::optional<std::uint64_t>& seed, bool reverse) {
  const auto ckpt = load_checkpoint(checkpoint_dir(weights));
  auto cfg = load_config_or_default(config);
  apply_seed(cfg, seed);
  cfg.data.frames = ckpt.config.frames;
  cfg.data.size = ckpt.config.height;
  const auto data = train::gen_dataset(cfg.data.eval_samples, cfg.data.frames, cfg.data.size, cfg.data.noise_std,
                                       cfg.data.seed + 1, cfg.data.bar);
  train::EvalOptions opts;
  opts.frames = order::parse_frame_strategy(strategy);
  opts.reverse_with_label_swap = reverse;
  const double acc = train::evaluate(ckpt.weights, ckpt.config, data, opts);
  nlohmann::ordered_json j;
  j["strategy"] = strategy;
  j["reversed"] = reverse;
  j["samples"] = data.size();
  j["accuracy"] = acc;
  std::cout << j.dump() << std::endl;
  return 0;
}

int run_delta(const std::string& weights, const std::string& clip_path, const std::string& out) {
  const auto ckpt = load_checkpoint(checkpoint_dir(weights));
  const auto clip = load_tensor_converting<float>(clip_path);
  if (clip.shape() != ckpt.config.clip_shape())
    throw ContractError("delta: clip shape " + shape_to_string(clip.shape()) + " does not match the model's " +
                        shape_to_string(ckpt.config.clip_shape()));
  const auto maps = model::extract_delta_maps(clip, ckpt.config, ckpt.weights);
  export_delta_maps(out, maps);
  info("wrote delta maps " + shape_to_string(maps.shape()) + " to " + out);
  return 0;
}

int run_dataset(const std::string& config, const std::string& out, const std::optional<std::uint64_t>& seed) {
  auto cfg = load_config_or_default(config);
  apply_seed(cfg, seed);
  const auto splits = train::make_splits(cfg.data);
  train::save_dataset(fs::path(out) / "train", splits.train);
  train::save_dataset(fs::path(out) / "eval", splits.eval);
  info("wrote " + std::to_string(splits.train.size()) + " + " + std::to_string(splits.eval.size()) + " clips to " +
       out);
  return 0;
}

int run_ablate(const std::string& config, const std::string& out, const std::optional<std::uint64_t>& seed) {
  auto cfg = load_run_config(config);
  apply_seed(cfg, seed);
  const auto splits = train::make_splits(cfg.data);
  std::string csv = "backward,final_loss,eval_acc\n";
  for (auto b : {order::BackwardStrategy::kSpatioTemporal, order::BackwardStrategy::kSpatial,
                 order::BackwardStrategy::kTemporal}) {
    auto mcfg = cfg.model;
    mcfg.backward = b;
    info("training backward=" + order::to_string(b));
    const auto r = train::train(mcfg, splits.train, splits.eval, cfg.train);
    const auto& last = r.metrics.back();
    csv += order::to_string(b) + "," + fixed(last.train_loss, 6) + "," + fixed(last.eval_acc, 6) + "\n";
  }
  std::cout << csv;
  if (!out.empty()) write_text(fs::path(out) / "backward.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video state-space encoder toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");
  auto* verbose = app.add_flag("-v,--verbose", "More progress output");
  auto* quiet = app.add_flag("-q,--quiet", "Suppress progress output");

  CheckArgs check;
  auto* c_check = app.add_subcommand("check", "Run the invariant and acceptance suite");
  c_check->add_option("--seed", check.seed, "Seed for all randomized checks");
  c_check->add_option("--out", check.out, "Directory for report.json");
  c_check->add_option("--train-config", check.train_config, "Run config enabling the training criterion")
      ->check(CLI::ExistingFile);
  c_check->add_option("--only", check.only, "Comma-separated criterion ids");

  std::string config, out, strategy = "sequential", convention = "dense-mac", sweep = "256,1024,4096,16384";
  std::string weights, clip;
  std::optional<std::uint64_t> seed;
  std::size_t dim = 64, trials = 5;
  bool reverse = false;

  auto* c_flops = app.add_subcommand("flops", "Print the analytic cost report as JSON");
  c_flops->add_option("--config", config, "Run config")->required()->check(CLI::ExistingFile);
  c_flops->add_option("--convention", convention, "dense-mac or full");

  auto* c_bench = app.add_subcommand("bench", "Scan vs attention scaling sweep (CSV)");
  c_bench->add_option("--sweep", sweep, "Comma-separated token counts");
  c_bench->add_option("--dim", dim, "Channel width");
  c_bench->add_option("--trials", trials, "Timed trials per point")->check(CLI::PositiveNumber);
  c_bench->add_option("--seed", seed, "Input seed");
  c_bench->add_option("--out", out, "Directory for scaling.csv");

  auto* c_train = app.add_subcommand("train", "Train on the synthetic direction task");
  c_train->add_option("--config", config, "Run config")->required()->check(CLI::ExistingFile);
  c_train->add_option("--out", out, "Output directory")->required();
  c_train->add_option("--seed", seed, "Overrides train and data seeds");

  auto* c_eval = app.add_subcommand("eval", "Accuracy under a frame-reordering strategy");
  c_eval->add_option("--weights", weights, "Checkpoint or training output directory")->required();
  c_eval->add_option("--strategy", strategy, "sequential, blockwise, pairwise or interleaved")
      ->check(CLI::IsMember({"sequential", "blockwise", "pairwise", "interleaved"}));
  c_eval->add_option("--config", config, "Run config whose data section defines the eval split")
      ->check(CLI::ExistingFile);
  c_eval->add_option("--seed", seed, "Overrides the data seed");
  c_eval->add_flag("--reverse", reverse, "Reverse clips in time and swap labels");

  auto* c_delta = app.add_subcommand("delta", "Export per-token step-size maps (CSV + PGM)");
  c_delta->add_option("--weights", weights, "Checkpoint directory")->required();
  c_delta->add_option("--clip", clip, "VMTB clip of shape (C, T, H, W)")->required()->check(CLI::ExistingFile);
  c_delta->add_option("--out", out, "Output directory")->required();

  auto* c_data = app.add_subcommand("dataset", "Write the synthetic dataset as VMTB clips and labels.csv");
  c_data->add_option("--config", config, "Run config (data section)")->check(CLI::ExistingFile);
  c_data->add_option("--out", out, "Output directory")->required();
  c_data->add_option("--seed", seed, "Overrides the data seed");

  auto* c_ablate = app.add_subcommand("ablate", "Train one model per backward scan strategy");
  c_ablate->add_option("--config", config, "Run config")->required()->check(CLI::ExistingFile);
  c_ablate->add_option("--out", out, "Directory for backward.csv");
  c_ablate->add_option("--seed", seed, "Overrides train and data seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  verbosity = quiet->count() > 0 ? -1 : static_cast<int>(verbose->count());

  try {
    if (*c_check) return run_check(check);
    if (*c_flops) return run_flops(config, convention);
    if (*c_bench) return run_bench(sweep, dim, trials, seed.value_or(0), out);
    if (*c_train) return run_train(config, out, seed);
    if (*c_eval) return run_eval(weights, strategy, config, seed, reverse);
    if (*c_delta) return run_delta(weights, clip, out);
    if (*c_data) return run_dataset(config, out, seed);
    if (*c_ablate) return run_ablate(config, out, seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
