#include "lnsr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "lnsr/csv.hpp"
#include "lnsr/errors.hpp"
#include "lnsr/manifold.hpp"
#include "lnsr/ops.hpp"

namespace lnsr {

void adam_step(std::span<Tensor> params, const std::vector<std::vector<double>>& grads, AdamState& state,
               std::size_t t, const AdamConfig& cfg) {
  require(t >= 1, "adam_step: step counter starts at 1");
  if (grads.size() != params.size()) throw ContractError("adam_step: gradient count differs from parameter count");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    const auto& g = grads[i];
    if (g.size() != w.size() || state.m[i].size() != w.size()) {
      throw ContractError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      if (cfg.weight_decay != 0.0) w[j] -= cfg.lr * cfg.weight_decay * w[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double base_lr) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  const double s = static_cast<double>(step);
  if (step < warmup) return base_lr * s / static_cast<double>(warmup);
  return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

void TrainConfig::validate(const EncoderConfig& model) const {
  model.validate();
  if (!(lr > 0.0)) throw ValidationError("train.lr must be > 0");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ValidationError("train.warmup_ratio must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
  if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("train.beta1/beta2 must lie in [0, 1)");
  reg.validate(model.num_layers);
  noise.validate();
  if (noise.injection_layer != reg.injection_layer) {
    throw ValidationError("noise.injection_layer and reg.injection_layer differ");
  }
  const auto nm = effective_noise_mode();
  if (reg.mode == ObjectiveMode::ft_noise_only && nm == NoiseMode::none) {
    throw ValidationError("ft_noise_only needs noise.mode standard or in_manifold");
  }
  if (nm == NoiseMode::in_manifold) {
    if (reg.injection_layer > 1) {
      throw ValidationError("in-manifold noise is only available at the embedding layer (injection_layer 0 or 1)");
    }
    if (model.vocab_size < knn_k + 1) {
      throw ValidationError("in-manifold noise needs vocab_size >= k+1 (" + std::to_string(knn_k + 1) + ")");
    }
  }
}

NoiseMode TrainConfig::effective_noise_mode() const {
  switch (reg.mode) {
    case ObjectiveMode::lnsr_standard: return NoiseMode::standard;
    case ObjectiveMode::lnsr_inmanifold: return NoiseMode::in_manifold;
    default: return noise.mode;
  }
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

enum StreamTag : std::uint32_t { kInit = 1, kOrder = 2, kNoise = 3, kDropout = 4 };

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::string echo(const EncoderConfig& m, const TrainConfig& c) {
  std::ostringstream os;
  os << "L=" << m.num_layers << " d=" << m.embed_dim << " heads=" << m.num_heads << " ffn=" << m.ffn_dim
     << " M=" << m.max_seq_len << " vocab=" << m.vocab_size << " mode=" << to_string(c.reg.mode)
     << " lambda=" << format_double(c.reg.lambda.front()) << " b=" << c.reg.injection_layer
     << " lr=" << format_double(c.lr) << " batch=" << c.batch_size << " epochs=" << c.epochs
     << " seed=" << c.seed;
  if (c.noise.rel_magnitude) os << " rho=" << format_double(*c.noise.rel_magnitude);
  else os << " sigma=" << format_double(c.noise.sigma);
  return os.str();
}

}  // namespace

double evaluate(const EncoderModel& model, const TextDataset& data) {
  require(!data.examples.empty(), "evaluate: empty dataset");
  if (data.regression) {
    std::vector<double> pred, gold;
    for (const auto& ex : data.examples) {
      pred.push_back(forward_with_taps(model, ex.tokens()).logits.item());
      gold.push_back(std::get<double>(ex.target));
    }
    return pearson(pred, gold);
  }
  std::size_t correct = 0;
  for (const auto& ex : data.examples) {
    auto z = forward_with_taps(model, ex.tokens()).logits.data();
    const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    correct += pred == std::get<std::size_t>(ex.target) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.examples.size());
}

RunResult run_training(const EncoderConfig& model_cfg, const TextDataset& train, const TextDataset& dev,
                       const TrainConfig& cfg) {
  cfg.validate(model_cfg);
  require(!train.examples.empty() && !dev.examples.empty(), "run_training: empty train or dev split");
  if (train.max_seq_len > model_cfg.max_seq_len) {
    throw ValidationError("dataset sequences are longer than the model's max_seq_len");
  }
  const auto t0 = std::chrono::steady_clock::now();

  RunResult result;
  result.config_echo = echo(model_cfg, cfg);
  auto model = build_encoder(model_cfg, stream_seed(cfg.seed, kInit));
  std::mt19937_64 order_rng(stream_seed(cfg.seed, kOrder));
  std::mt19937_64 noise_rng(stream_seed(cfg.seed, kNoise));
  std::mt19937_64 dropout_rng(stream_seed(cfg.seed, kDropout));

  auto params = model.parameters();
  AdamState adam;
  auto adam_cfg = cfg.adam();
  const auto n = train.examples.size();
  const auto batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const auto total_steps = batches * cfg.epochs;
  const auto b = cfg.reg.injection_layer;
  const auto noise_mode = cfg.effective_noise_mode();
  const bool perturb = cfg.reg.mode != ObjectiveMode::ft;
  const auto M = model_cfg.max_seq_len, d = model_cfg.embed_dim;

  ForwardOptions clean_opts{model_cfg.dropout_rate, &dropout_rng};
  ForwardOptions pert_opts{model_cfg.dropout_in_perturbed ? model_cfg.dropout_rate : 0.0, &dropout_rng};

  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    std::optional<InManifoldSampler> sampler;
    if (noise_mode == NoiseMode::in_manifold) sampler.emplace(model.token_embedding.detach(), cfg.knn_k);

    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const auto begin = bi * cfg.batch_size;
      const auto end = std::min(n, begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      Tensor batch_loss;
      for (std::size_t idx = begin; idx < end; ++idx) {
        const auto& ex = train.examples[order[idx]];
        const auto tokens = ex.tokens();
        auto clean = forward_with_taps(model, tokens, std::nullopt, clean_opts);

        // Noise is drawn in every mode so all modes consume the noise stream
        // identically; ft then ignores it.
        Tensor noise;
        if (noise_mode != NoiseMode::none) {
          const auto x_b = clean.trace.layer_input(b).detach();
          if (noise_mode == NoiseMode::in_manifold) {
            noise = sampler->sample(tokens, x_b, cfg.noise.sigma, cfg.noise.rel_magnitude, noise_rng);
          } else {
            auto raw = sample_standard_noise({M, d}, cfg.noise.sigma, noise_rng);
            if (cfg.noise.rel_magnitude) {
              noise = rescale_rows(raw, x_b, *cfg.noise.rel_magnitude, cfg.noise.granularity, clean.trace.valid,
                                   cfg.noise.rule);
            } else {
              std::vector<double> mask(clean.trace.valid.begin(), clean.trace.valid.end());
              noise = mask_rows(raw, mask);
            }
          }
        }

        std::optional<Tensor> pert_logits;
        std::optional<Tensor> reg;
        if (perturb && noise.defined()) {
          auto pert = forward_with_taps(model, tokens, Injection{b, noise}, pert_opts);
          pert_logits = pert.logits;
          if (cfg.reg.uses_regularizer()) reg = lnsr_term(clean.trace, pert.trace, cfg.reg).value;
        }
        auto obj = scale(assemble_objective(clean.logits, pert_logits, ex.target, reg, cfg.reg.mode), inv_batch);
        batch_loss = batch_loss.defined() ? add(batch_loss, obj) : obj;
      }
      for (auto& p : params) p.zero_grad();
      backward(batch_loss);
      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (const auto& p : params) grads.push_back(p.grad());
      adam_cfg.lr = lr_at(step, total_steps, cfg.warmup_ratio, cfg.lr);
      adam_step(params, grads, adam, ++step, adam_cfg);
      loss_sum += batch_loss.item();
    }
    if (sampler) result.manifold_fallbacks += sampler->fallback_count();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.train_metric = evaluate(model, train);
    rec.dev_metric = evaluate(model, dev);
    result.epochs.push_back(rec);
  }
  for (auto& p : params) p.zero_grad();

  result.final_train_metric = result.epochs.back().train_metric;
  result.final_dev_metric = result.epochs.back().dev_metric;
  result.generalization_gap = result.final_train_metric - result.final_dev_metric;
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.model = std::move(model);
  return result;
}

void write_run_csv(const RunResult& r, const std::filesystem::path& path) {
  CsvWriter w(path, {"epoch", "train_loss", "train_metric", "dev_metric"});
  for (const auto& e : r.epochs) {
    w.field(e.epoch).field(e.train_loss).field(e.train_metric).field(e.dev_metric);
    w.end_row();
  }
}

SummaryStats summarize(std::span<const double> values) {
  require(!values.empty(), "summarize: no values");
  SummaryStats s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  s.max = *std::max_element(values.begin(), values.end());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

MultiSeedResult multi_seed(const EncoderConfig& model_cfg, const TextDataset& train, const TextDataset& dev,
                           const TrainConfig& tmpl, std::span<const std::uint64_t> seeds,
                           const std::optional<std::filesystem::path>& partial_csv) {
  require(seeds.size() >= 2, "multi_seed: need at least 2 seeds");
  MultiSeedResult out;
  out.mode = to_string(tmpl.reg.mode);
  std::optional<CsvWriter> sink;
  if (partial_csv) sink.emplace(*partial_csv, std::vector<std::string>{"mode", "seed", "train_metric", "dev_metric", "gap"});
  for (auto seed : seeds) {
    auto cfg = tmpl;
    cfg.seed = seed;
    const auto r = run_training(model_cfg, train, dev, cfg);
    SeedRow row{seed, r.final_train_metric, r.final_dev_metric, r.generalization_gap};
    out.rows.push_back(row);
    if (sink) {
      sink->field(out.mode).field(static_cast<std::size_t>(seed)).field(row.train_metric).field(row.dev_metric).field(row.gap);
      sink->end_row();
      sink->flush();
    }
  }
  std::vector<double> devs, gaps;
  for (const auto& r : out.rows) {
    devs.push_back(r.dev_metric);
    gaps.push_back(r.gap);
  }
  out.dev = summarize(devs);
  out.gap = summarize(gaps);
  return out;
}

}  // namespace lnsr
