#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "vmamba/checkpoint.hpp"
#include "vmamba/config.hpp"

using namespace vmamba;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vmamba_io_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Config, SectionsOverrideDefaults) {
  const auto cfg = parse_run_config(R"({"model": {"depth": 3, "tubelet": [1, 4, 4], "backward": "temporal-reverse"},
                                        "train": {"lr": 0.002}, "data": {"noise_std": 0.3}})");
  EXPECT_EQ(cfg.model.depth, 3u);
  EXPECT_EQ(cfg.model.tubelet, (video::TubeletSpec{1, 4, 4}));
  EXPECT_EQ(cfg.model.backward, order::BackwardStrategy::kTemporal);
  EXPECT_EQ(cfg.model.dim, model::ModelConfig{}.dim);
  EXPECT_EQ(cfg.train.lr, 0.002);
  EXPECT_EQ(cfg.data.noise_std, 0.3);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(parse_run_config(R"({"model": {"depht": 3}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"optimizer": {}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"depth": "three"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"tubelet": [2, 16]}})"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto cfg = parse_run_config("{}");
  cfg.model = model::toy_config();
  cfg.model.pe_mode = video::PeMode::kSinusoid;
  cfg.train.epochs = 7;
  cfg.data.seed = 42;
  const auto text = to_json(cfg);
  EXPECT_EQ(to_json(parse_run_config(text)), text);
  EXPECT_EQ(to_json(parse_model_config(to_json(cfg.model))), to_json(cfg.model));
}

TEST(Config, ShippedFilesLoad) {
  const fs::path root = VMAMBA_SOURCE_DIR;
  for (const char* name : {"toy.json", "smoke.json", "large8.json", "large16.json", "large32.json", "large16_d192.json"}) {
    EXPECT_NO_THROW(load_run_config(root / "configs" / name)) << name;
  }
  EXPECT_EQ(load_run_config(root / "configs/large16.json").model.sequence_length(), 1569u);
  EXPECT_THROW(load_run_config(root / "configs/missing.json"), ConfigError);
}

TEST(Checkpoint, SaveLoadIsBitExact) {
  const auto dir = scratch("ckpt");
  const auto cfg = model::toy_config();
  const auto w = model::init_weights<float>(cfg, 3);
  save_checkpoint(dir, cfg, w);
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
  const auto back = load_checkpoint(dir);
  EXPECT_EQ(back.weights, w);
  EXPECT_EQ(to_json(back.config), to_json(cfg));
  fs::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchRejected) {
  const auto dir = scratch("ckpt_bad");
  auto cfg = model::toy_config();
  save_checkpoint(dir, cfg, model::init_weights<float>(cfg, 3));
  cfg.dim = 48;
  std::ofstream(dir / "config.json") << to_json(cfg);
  EXPECT_ANY_THROW(load_checkpoint(dir));
  fs::remove_all(dir);
  EXPECT_ANY_THROW(load_checkpoint(dir));
}

TEST(Export, PgmHeaderAndRange) {
  const auto dir = scratch("pgm");
  fs::create_directories(dir);
  write_pgm(dir / "a.pgm", Tensor({2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5}));
  const auto bytes = slurp(dir / "a.pgm");
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size()]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 255);
  fs::remove_all(dir);
}

TEST(Export, DeltaMapsWriteCsvAndFrames) {
  const auto dir = scratch("delta");
  Tensor maps({2, 3, 2, 2});
  for (std::size_t i = 0; i < maps.size(); ++i) maps[i] = 0.1f * static_cast<float>(i + 1);
  export_delta_maps(dir, maps);
  const auto csv = slurp(dir / "delta.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 24);
  std::size_t pgms = 0;
  for (const auto& e : fs::directory_iterator(dir)) pgms += e.path().extension() == ".pgm";
  EXPECT_EQ(pgms, 6u);
  fs::remove_all(dir);
}
