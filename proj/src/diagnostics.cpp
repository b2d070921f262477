#include "lnsr/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "lnsr/csv.hpp"
#include "lnsr/errors.hpp"
#include "lnsr/linalg.hpp"
#include "lnsr/manifold.hpp"

namespace lnsr {

namespace {

double masked_norm(std::span<const double> v, std::size_t cols, std::span<const std::uint8_t> valid) {
  double s = 0.0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    for (std::size_t j = 0; j < cols; ++j) s += v[i * cols + j] * v[i * cols + j];
  }
  return std::sqrt(s);
}

double masked_diff_norm(std::span<const double> a, std::span<const double> b, std::size_t cols,
                        std::span<const std::uint8_t> valid) {
  double s = 0.0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = a[i * cols + j] - b[i * cols + j];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

std::uint64_t probe_seed(std::uint64_t seed, std::span<const std::size_t> tokens) {
  // FNV-1a over the token ids, mixed with the run seed.
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (auto t : tokens) {
    h ^= static_cast<std::uint64_t>(t) + 0x9e3779b97f4a7c15ull;
    h *= 1099511628211ull;
  }
  return h;
}

double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ErrorRatioCurve error_ratio_curve(const EncoderModel& model, std::span<const Example> probes, std::size_t b,
                                  double rho, std::uint64_t seed, RescaleGranularity granularity) {
  const auto& cfg = model.config();
  const auto L = cfg.num_layers, M = cfg.max_seq_len, d = cfg.embed_dim;
  require(!probes.empty(), "error_ratio_curve: empty probe set");
  require(b >= 1 && b <= L, "error_ratio_curve: injection layer must lie in [1, L]");
  require(rho >= 0.0, "error_ratio_curve: rho must be >= 0");

  std::vector<std::vector<double>> per_layer(L - b + 1);
  std::vector<double> per_output;
  for (const auto& ex : probes) {
    const auto tokens = ex.tokens();
    const auto clean = forward_with_taps(model, tokens);
    const auto x_b = clean.trace.layer_input(b);
    Tensor noise = Tensor::zeros({M, d});
    if (rho > 0.0) {
      std::mt19937_64 rng(probe_seed(seed, tokens));
      noise = rescale_rows(sample_standard_noise({M, d}, 1.0, rng), x_b, rho, granularity, clean.trace.valid);
    }
    const auto pert = forward_with_taps(model, tokens, Injection{b, noise});
    const auto& valid = clean.trace.valid;
    for (std::size_t i = b; i <= L; ++i) {
      const auto x = clean.trace.layer_input(i).data();
      const auto xh = pert.trace.layer_input(i).data();
      const double base = masked_norm(x, d, valid);
      per_layer[i - b].push_back(base == 0.0 ? 0.0 : masked_diff_norm(xh, x, d, valid) / base);
    }
    const auto y = clean.trace.layers[L].data();
    const auto yh = pert.trace.layers[L].data();
    const double base = masked_norm(y, d, valid);
    per_output.push_back(base == 0.0 ? 0.0 : masked_diff_norm(yh, y, d, valid) / base);
  }
  ErrorRatioCurve c;
  c.injection_layer = b;
  c.rho = rho;
  c.probe_count = probes.size();
  for (auto& v : per_layer) c.ratios.push_back(sorted_mean(std::move(v)));
  c.output_ratio = sorted_mean(std::move(per_output));
  return c;
}

double SpectrumReport::top_mass(std::size_t k) const {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(k, eigenvalues.size()); ++i) s += eigenvalues[i];
  return s;
}

SpectrumReport pca_noise_spectrum(const Tensor& noise_batch, std::string source) {
  if (noise_batch.ndim() != 2) throw ShapeError("pca_noise_spectrum expects an [n x d] batch");
  const auto n = noise_batch.rows(), d = noise_batch.cols();
  require(n >= 2, "pca_noise_spectrum: need at least 2 samples");
  SpectrumReport r;
  r.source = std::move(source);
  r.batch_size = n;
  const auto cov = linalg::covariance({noise_batch.data().begin(), noise_batch.data().end()}, n, d);
  auto ev = linalg::symmetric_eigenvalues(cov, d);
  for (auto& e : ev)
    if (e < 0.0) e = 0.0;  // round-off below zero
  const double total = std::accumulate(ev.begin(), ev.end(), 0.0);
  if (total <= 0.0) {
    std::cerr << "warning: zero-variance noise batch; spectrum is all zeros\n";
    r.zero_variance = true;
    r.eigenvalues.assign(d, 0.0);
    return r;
  }
  for (auto& e : ev) e /= total;
  r.eigenvalues = std::move(ev);
  return r;
}

Tensor inmanifold_noise_batch(const Tensor& points, std::size_t n, std::size_t k, double sigma, std::uint64_t seed) {
  const NeighborIndex index(points);
  const auto d = index.dim();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
  std::unordered_map<std::size_t, OrthoBasis> cache;
  std::vector<double> out(n * d);
  for (std::size_t s = 0; s < n; ++s) {
    const auto p = pick(rng);
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, neighborhood_basis(index, index.row(p), k, true)).first;
    draw_inmanifold(std::span<double>(out.data() + s * d, d), it->second, sigma, rng);
  }
  return Tensor::from({n, d}, std::move(out));
}

std::vector<SweepRow> sensitivity_sweep(const EncoderConfig& model_cfg, const TextDataset& train,
                                        const TextDataset& dev, const TrainConfig& base, const SweepSpec& sweep,
                                        std::span<const std::uint64_t> seeds) {
  require(!sweep.values.empty(), "sensitivity_sweep: empty sweep");
  std::vector<SweepRow> rows;
  for (double v : sweep.values) {
    auto cfg = base;
    SweepRow row;
    row.value = v;
    if (sweep.kind == SweepSpec::Kind::injection_layer) {
      require(v >= 0.0 && v == std::floor(v), "sensitivity_sweep: injection layers must be integers");
      cfg.reg.injection_layer = static_cast<std::size_t>(v);
      cfg.noise.injection_layer = cfg.reg.injection_layer;
      if (cfg.reg.lambda.size() != 1) cfg.reg.lambda = {cfg.reg.lambda.front()};
      row.setting = "injection_layer";
    } else {
      cfg.noise.rel_magnitude = v;
      row.setting = "mix_ratio";
    }
    row.stats = multi_seed(model_cfg, train, dev, cfg, seeds);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  CsvWriter w(path, {"setting", "value", "mode", "seeds", "dev_mean", "dev_std", "dev_max", "gap_mean",
                     "gap_std", "gap_max"});
  for (const auto& r : rows) {
    w.field(r.setting).field(r.value).field(r.stats.mode).field(r.stats.rows.size());
    w.field(r.stats.dev.mean).field(r.stats.dev.std).field(r.stats.dev.max);
    w.field(r.stats.gap.mean).field(r.stats.gap.std).field(r.stats.gap.max);
    w.end_row();
  }
}

void BenchParams::validate() const {
  auto nonempty_positive = [](const std::vector<std::size_t>& v, const char* name) {
    if (v.size() < 2) throw ValidationError(std::string("bench: ") + name + " needs at least two sizes");
    if (std::any_of(v.begin(), v.end(), [](auto x) { return x == 0; })) {
      throw ValidationError(std::string("bench: zero-length input in ") + name);
    }
  };
  if (embed_dim == 0 || manifold_tokens == 0) throw ValidationError("bench: zero-length input");
  nonempty_positive(seq_lens, "seq_lens");
  nonempty_positive(ks, "ks");
  nonempty_positive(index_sizes, "index_sizes");
  if (repetitions < 5) throw ValidationError("bench: at least 5 repetitions are required");
  if (vocab < *std::max_element(ks.begin(), ks.end()) + 1) throw ValidationError("bench: vocab must exceed max k");
}

namespace {

double median_seconds(const std::function<void()>& fn, std::size_t reps, double min_batch) {
  using clock = std::chrono::steady_clock;
  fn();  // warm-up
  std::size_t inner = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    if (dt >= min_batch || inner >= (1u << 20)) break;
    inner *= 2;
  }
  std::vector<double> samples;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    samples.push_back(std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(inner));
  }
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2), samples.end());
  return samples[samples.size() / 2];
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(r * c);
  for (auto& x : v) x = nd(rng);
  return Tensor::from({r, c}, std::move(v));
}

}  // namespace

BenchReport bench_complexity(const BenchParams& p) {
  p.validate();
  BenchReport rep;
  std::mt19937_64 rng(p.seed);
  const auto d = p.embed_dim;

  std::vector<double> xs, ys;
  for (auto m : p.seq_lens) {
    const auto x = random_matrix(m, d, rng);
    std::mt19937_64 noise_rng(p.seed + 1);
    auto t = median_seconds(
        [&] {
          auto raw = sample_standard_noise({m, d}, 1.0, noise_rng);
          auto eps = rescale_rows(raw, x, kDefaultRelMagnitude, RescaleGranularity::per_token);
          (void)eps;
        },
        p.repetitions, p.min_batch_seconds);
    rep.rows.push_back({"standard_noise", m * d, t});
    xs.push_back(static_cast<double>(m * d));
    ys.push_back(t);
  }
  rep.standard_exponent = linalg::loglog_slope(xs, ys);

  const NeighborIndex vocab_index(random_matrix(p.vocab, d, rng));
  std::uniform_int_distribution<std::size_t> pick(0, p.vocab - 1);
  std::vector<std::size_t> tokens(p.manifold_tokens);
  for (auto& t : tokens) t = pick(rng);
  xs.clear();
  ys.clear();
  for (auto k : p.ks) {
    std::vector<OrthoBasis> bases;
    for (auto t : tokens) bases.push_back(neighborhood_basis(vocab_index, vocab_index.row(t), k, true));
    std::vector<double> out(p.manifold_tokens * d);
    std::mt19937_64 noise_rng(p.seed + 2);
    auto t = median_seconds(
        [&] {
          for (std::size_t i = 0; i < bases.size(); ++i) {
            draw_inmanifold(std::span<double>(out.data() + i * d, d), bases[i], 1.0, noise_rng);
          }
        },
        p.repetitions, p.min_batch_seconds);
    rep.rows.push_back({"inmanifold_sampling", k, t});
    xs.push_back(static_cast<double>(k));
    ys.push_back(t);
  }
  rep.inmanifold_k_exponent = linalg::loglog_slope(xs, ys);

  xs.clear();
  ys.clear();
  for (auto n : p.index_sizes) {
    const NeighborIndex index(random_matrix(n, d, rng));
    const auto q = random_matrix(1, d, rng);
    auto t = median_seconds([&] { (void)index.knn(q.data(), kDefaultNeighbors, false); }, p.repetitions,
                            p.min_batch_seconds);
    rep.rows.push_back({"knn_query", n, t});
    xs.push_back(static_cast<double>(n));
    ys.push_back(t);
  }
  rep.knn_n_exponent = linalg::loglog_slope(xs, ys);
  return rep;
}

}  // namespace lnsr
