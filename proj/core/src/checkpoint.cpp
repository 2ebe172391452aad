#include "vmamba/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vmamba/config.hpp"
#include "vmamba/serialize.hpp"

namespace vmamba {

namespace {

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape_token(const std::string& token) {
  Shape s;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, 'x')) s.push_back(std::stoull(part));
  return s;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const model::ModelConfig& cfg,
                     const ad::ParameterSet<float>& weights) {
  std::filesystem::create_directories(dir / "tensors");
  {
    std::ofstream out(dir / "config.json");
    out << to_json(cfg) << '\n';
  }
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  for (const auto& [name, t] : weights) {
    const std::string file = "tensors/" + name + ".vmtb";
    save_tensor(dir / file, t);
    manifest << name << ' ' << file << ' ' << shape_token(t.shape()) << '\n';
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint ck;
  ck.config = parse_model_config(read_file(dir / "config.json"));
  std::stringstream manifest(read_file(dir / "manifest.txt"));
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string name, file, shape;
    if (!(ls >> name >> file >> shape)) throw FormatError("malformed manifest line: " + line);
    Tensor t = load_tensor_converting<float>(dir / file);
    if (t.shape() != parse_shape_token(shape)) {
      throw FormatError("tensor " + name + " has shape " + shape_to_string(t.shape()) + ", manifest says " + shape);
    }
    ck.weights.emplace(name, std::move(t));
  }
  for (const auto& [name, shape] : model::parameter_shapes(ck.config)) {
    auto it = ck.weights.find(name);
    if (it == ck.weights.end()) throw FormatError("checkpoint is missing tensor " + name);
    if (it->second.shape() != shape) throw FormatError("checkpoint tensor " + name + " has the wrong shape");
  }
  if (ck.weights.size() != model::parameter_shapes(ck.config).size()) {
    throw FormatError("checkpoint holds tensors the config does not describe");
  }
  return ck;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm: image must be rank 2");
  const auto d = image.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  for (float v : d) {
    const double u = range > 0 ? (static_cast<double>(v) - *lo) / range : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0))));
  }
}

void export_delta_maps(const std::filesystem::path& dir, const Tensor& maps) {
  if (maps.rank() != 4) throw ShapeError("export_delta_maps: maps must be (L, nt, nh, nw)");
  std::filesystem::create_directories(dir);
  const std::size_t L = maps.dim(0), nt = maps.dim(1), nh = maps.dim(2), nw = maps.dim(3);
  std::ofstream csv(dir / "delta.csv");
  csv.precision(9);
  csv << "layer,t,h,w,value\n";
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t t = 0; t < nt; ++t) {
      Tensor frame({nh, nw});
      for (std::size_t h = 0; h < nh; ++h)
        for (std::size_t w = 0; w < nw; ++w) {
          const float v = maps[((l * nt + t) * nh + h) * nw + w];
          frame.at(h, w) = v;
          csv << l << ',' << t << ',' << h << ',' << w << ',' << v << '\n';
        }
      write_pgm(dir / ("delta_l" + std::to_string(l) + "_t" + std::to_string(t) + ".pgm"), frame);
    }
}

}  // namespace vmamba
