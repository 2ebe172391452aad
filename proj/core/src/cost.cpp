#include "vmamba/cost.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "json_io.hpp"

namespace vmamba::cost {

FlopConvention parse_flop_convention(std::string_view name) {
  if (name == "dense-mac") return FlopConvention::kDenseMac;
  if (name == "full") return FlopConvention::kFull;
  throw ContractError("unknown FLOP convention '" + std::string(name) + "'");
}

std::string to_string(FlopConvention c) {
  return c == FlopConvention::kDenseMac ? "dense-mac" : "full";
}

namespace {

// Per-element costs under the full convention.
constexpr std::uint64_t kLayerNormPerElem = 8;
constexpr std::uint64_t kSiluPerElem = 4;
constexpr std::uint64_t kSoftplusPerElem = 3;
constexpr std::uint64_t kDiscretizePerElem = 4;

class StageTable {
 public:
  explicit StageTable(CostReport& r) : r_(r) {}
  void add(const std::string& stage, std::uint64_t flops, const std::string& formula) {
    r_.flops_by_stage[stage] += flops;
    r_.formulas.emplace(stage, formula);
  }

 private:
  CostReport& r_;
};

}  // namespace

std::uint64_t selective_scan_flops(std::uint64_t n, std::uint64_t ch, std::uint64_t N, std::uint64_t R) {
  const std::uint64_t bc = 2 * 2 * n * ch * N;
  const std::uint64_t dt = 2 * n * ch * R + 2 * n * R * ch + n * ch + kSoftplusPerElem * n * ch;
  const std::uint64_t disc = kDiscretizePerElem * n * ch * N;
  const std::uint64_t scan = 2 * (2 * n * ch * N) + 2 * n * ch;
  return bc + dt + disc + scan;
}

CostReport count_flops(const model::ModelConfig& cfg, FlopConvention convention) {
  cfg.validate();
  CostReport r;
  r.convention = convention;
  r.config = cfg;
  r.params_total = count_params(cfg);
  const std::uint64_t n = cfg.video_tokens(), len = cfg.sequence_length();
  r.token_count = len;
  const std::uint64_t d = cfg.dim, e = cfg.inner_dim(), N = cfg.state_size, R = cfg.resolved_dt_rank();
  const std::uint64_t L = cfg.depth, K = cfg.num_classes, kc = cfg.conv_kernel;
  const std::uint64_t vol = cfg.channels * cfg.tubelet.volume();
  StageTable st(r);

  if (convention == FlopConvention::kDenseMac) {
    st.add("tokenizer", n * d * vol, "n*d*C*st*sh*sw");
    st.add("in_proj", L * len * d * e, "L*len*d*2d");
    st.add("gate_proj", L * len * d * e, "L*len*d*2d");
    st.add("out_proj", L * len * e * d, "L*len*2d*d");
    st.add("head", d * K, "d*K");
  } else {
    st.add("tokenizer", 2 * n * d * vol + n * d, "2*n*d*C*st*sh*sw + n*d");
    if (cfg.pe_mode != video::PeMode::kNone) st.add("pos_embed", n * d, "n*d");
    st.add("norm", L * kLayerNormPerElem * len * d + kLayerNormPerElem * d, "8*L*len*d + 8*d");
    st.add("in_proj", L * 2 * len * d * e, "2*L*len*d*2d");
    st.add("gate_proj", L * 2 * len * d * e, "2*L*len*d*2d");
    st.add("conv1d", L * (2 * len * e * kc + len * e), "L*(2*len*2d*K + len*2d)");
    st.add("activation", L * 2 * kSiluPerElem * len * e, "L*2*4*len*2d");
    st.add("bc_proj", L * 2 * (2 * 2 * len * e * N), "L*2dirs*2*2*len*2d*N");
    st.add("dt_proj", L * 2 * (4 * len * e * R + len * e + kSoftplusPerElem * len * e),
           "L*2dirs*(4*len*2d*R + 4*len*2d)");
    st.add("discretization", L * 2 * kDiscretizePerElem * len * e * N, "L*2dirs*4*len*2d*N");
    st.add("scan", L * 2 * (2 * (2 * len * e * N) + 2 * len * e), "L*2dirs*(2*(2*len*2d*N) + 2*len*2d)");
    st.add("gate", L * 2 * len * e, "L*(len*2d direction sum + len*2d gating)");
    st.add("out_proj", L * 2 * len * e * d, "2*L*len*2d*d");
    st.add("residual", L * len * d, "L*len*d");
    st.add("head", 2 * d * K + K, "2*d*K + K");
  }
  for (const auto& [stage, f] : r.flops_by_stage) r.flops_total += f;
  return r;
}

std::uint64_t count_params(const model::ModelConfig& cfg) {
  cfg.validate();
  const std::uint64_t d = cfg.dim, e = cfg.inner_dim(), N = cfg.state_size, R = cfg.resolved_dt_rank();
  const std::uint64_t vol = cfg.channels * cfg.tubelet.volume();
  std::uint64_t total = d * vol + d;
  if (cfg.pe_mode == video::PeMode::kLearnable) total += cfg.video_tokens() * d;
  if (cfg.class_token) total += 2 * d;
  const std::uint64_t direction = 3 * e * N + e + 2 * e * R + e;
  const std::uint64_t block = 2 * d + 2 * d * e + e * cfg.conv_kernel + e + 2 * direction + e * d;
  total += cfg.depth * block;
  total += 2 * d + d * cfg.num_classes + cfg.num_classes;
  return total;
}

std::uint64_t attention_flops(std::uint64_t n, std::uint64_t d) {
  if (n == 0 || d == 0) throw ContractError("attention_flops: n and d must be positive");
  return 2 * n * n * d + 2 * n * n * d + 5 * n * n;
}

std::uint64_t attention_crossover(std::uint64_t d, std::uint64_t state, std::uint64_t dt_rank) {
  // attention_flops(n) = n^2 (4d + 5) and selective_scan_flops(n) = n * c,
  // so attention is larger exactly when n > c / (4d + 5).
  const std::uint64_t c = selective_scan_flops(1, d, state, dt_rank);
  return c / (4 * d + 5) + 1;
}

std::string CostReport::to_json(int indent) const {
  nlohmann::ordered_json j;
  j["convention"] = to_string(convention);
  j["flops_total"] = flops_total;
  j["gflops_total"] = static_cast<double>(flops_total) / 1e9;
  j["params_total"] = params_total;
  j["token_count"] = token_count;
  j["flops_by_stage"] = flops_by_stage;
  j["formulas"] = formulas;
  j["config"] = detail::model_config_to_json(config);
  return j.dump(indent);
}

LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("loglog_fit: need at least two points");
  const double m = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw ContractError("loglog_fit: values must be positive");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
    sx += lx.back();
    sy += ly.back();
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

template <typename T>
BasicTensor<T> naive_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v) {
  if (q.rank() != 2 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw ShapeError("naive_attention: q, k, v must share one (n, d) shape");
  }
  const std::size_t n = q.dim(0), d = q.dim(1);
  const BasicTensor<T> kt = transpose(k);
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(d));
  BasicTensor<T> out({n, d});
  std::vector<T> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(scores.begin(), scores.end(), T{0});
    for (std::size_t p = 0; p < d; ++p) {
      const T qp = q.at(i, p) * inv_sqrt;
      const T* krow = kt.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) scores[j] += qp * krow[j];
    }
    const T mx = *std::max_element(scores.begin(), scores.end());
    T total = 0;
    for (auto& s : scores) {
      s = std::exp(s - mx);
      total += s;
    }
    T* orow = out.data().data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const T w = scores[j] / total;
      const T* vrow = v.data().data() + j * d;
      for (std::size_t p = 0; p < d; ++p) orow[p] += w * vrow[p];
    }
  }
  return out;
}

template BasicTensor<float> naive_attention(const BasicTensor<float>&, const BasicTensor<float>&,
                                            const BasicTensor<float>&);
template BasicTensor<double> naive_attention(const BasicTensor<double>&, const BasicTensor<double>&,
                                             const BasicTensor<double>&);

namespace {

struct TrialStats {
  double median = 0;
  double iqr = 0;
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

template <typename F>
TrialStats time_kernel(F&& kernel, const ScalingOptions& o) {
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < o.warmup; ++i) kernel();
  // Calibrate a repetition count so each trial lasts at least min_trial_ms.
  std::size_t reps = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < reps; ++i) kernel();
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    if (ms >= o.min_trial_ms || reps >= (1u << 20)) break;
    reps = ms <= 0 ? reps * 16 : std::max(reps + 1, static_cast<std::size_t>(reps * 1.2 * o.min_trial_ms / ms));
  }
  std::vector<double> samples;
  for (std::size_t t = 0; t < o.trials; ++t) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < reps; ++i) kernel();
    const double ns = std::chrono::duration<double, std::nano>(clock::now() - t0).count();
    samples.push_back(ns / static_cast<double>(reps));
  }
  return {quantile(samples, 0.5), quantile(samples, 0.75) - quantile(samples, 0.25)};
}

volatile float g_sink = 0;

}  // namespace

ScalingReport scaling_experiment(const std::vector<std::size_t>& token_counts, const ScalingOptions& o) {
  if (token_counts.size() < 4) throw ContractError("scaling_experiment: need at least 4 token counts");
  const auto [mn, mx] = std::minmax_element(token_counts.begin(), token_counts.end());
  if (*mx < 16 * *mn) throw ContractError("scaling_experiment: token counts must span at least 16x");
  if (o.trials < 5) throw ContractError("scaling_experiment: need at least 5 trials");

  const std::size_t d = o.dim, N = o.state_size, R = (d + 15) / 16;
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto random = [&](Shape s, float scale) {
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = scale * normal(rng);
    return t;
  };
  auto params = ssm::default_channel_params<float>(d, N);
  ssm::SelectiveProjections<float> proj{random({d, N}, 0.1f), random({d, N}, 0.1f), random({d, R}, 0.1f),
                                        random({R, d}, 0.1f), Tensor({d}, -2.0f)};

  ScalingReport report;
  for (std::size_t n : token_counts) {
    ScalingPoint pt;
    pt.n = n;
    const Tensor x = random({n, d}, 1.0f);
    const auto scan = time_kernel([&] { g_sink = g_sink + ssm::selective_scan(x, params, proj)[0]; }, o);
    pt.median_ns_scan = scan.median;
    pt.iqr_ns_scan = scan.iqr;
    if (o.include_attention) {
      const Tensor q = random({n, d}, 1.0f), k = random({n, d}, 1.0f), v = random({n, d}, 1.0f);
      const auto attn = time_kernel([&] { g_sink = g_sink + naive_attention(q, k, v)[0]; }, o);
      pt.median_ns_attn = attn.median;
      pt.iqr_ns_attn = attn.iqr;
    }
    if (scan.iqr > 0.5 * scan.median) {
      report.warnings.push_back("flaky measurement: scan at n=" + std::to_string(n));
    }
    if (o.include_attention && pt.iqr_ns_attn > 0.5 * pt.median_ns_attn) {
      report.warnings.push_back("flaky measurement: attention at n=" + std::to_string(n));
    }
    report.points.push_back(pt);
  }
  std::vector<double> ns, ts, ta;
  for (const auto& p : report.points) {
    ns.push_back(static_cast<double>(p.n));
    ts.push_back(p.median_ns_scan);
    ta.push_back(p.median_ns_attn);
  }
  const auto fs = loglog_fit(ns, ts);
  report.slope_scan = fs.slope;
  report.r2_scan = fs.r2;
  if (o.include_attention) {
    const auto fa = loglog_fit(ns, ta);
    report.slope_attn = fa.slope;
    report.r2_attn = fa.r2;
  }
  return report;
}

std::string ScalingReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "n,median_ns_scan,median_ns_attn\n";
  for (const auto& p : points) os << p.n << ',' << p.median_ns_scan << ',' << p.median_ns_attn << '\n';
  return os.str();
}

}  // namespace vmamba::cost
