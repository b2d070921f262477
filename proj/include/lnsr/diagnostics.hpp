#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lnsr/data.hpp"
#include "lnsr/encoder.hpp"
#include "lnsr/noise.hpp"
#include "lnsr/trainer.hpp"

namespace lnsr {

/// Relative deviation ||x_hat^i - x^i|| / ||x^i|| of each layer input
/// i = b..L (entry 0 is the injection point), averaged over a probe set.
struct ErrorRatioCurve {
  std::size_t injection_layer = 1;
  double rho = 0.0;
  std::vector<double> ratios;  // L - b + 1 entries
  double output_ratio = 0.0;   // same ratio for the final layer output
  std::size_t probe_count = 0;
};

inline constexpr std::size_t kDefaultProbeCount = 64;

/// Noise for each probe comes from an rng seeded by `seed` and the probe's
/// tokens, and per-layer means are summed in sorted order, so the curve does
/// not depend on probe order.
ErrorRatioCurve error_ratio_curve(const EncoderModel& model, std::span<const Example> probes, std::size_t b,
                                  double rho, std::uint64_t seed,
                                  RescaleGranularity granularity = RescaleGranularity::per_token);

struct SpectrumReport {
  std::vector<double> eigenvalues;  // descending, sum 1 (all zero when degenerate)
  std::string source;
  std::size_t batch_size = 0;
  bool zero_variance = false;

  /// Sum of the `k` largest normalized eigenvalues.
  double top_mass(std::size_t k) const;
};

SpectrumReport pca_noise_spectrum(const Tensor& noise_batch, std::string source = "");

/// n in-manifold noise draws, each at a random point of `points` using
/// its k nearest neighbors among the others.
Tensor inmanifold_noise_batch(const Tensor& points, std::size_t n, std::size_t k, double sigma,
                              std::uint64_t seed);

struct SweepRow {
  std::string setting;  // "injection_layer" or "mix_ratio"
  double value = 0.0;
  MultiSeedResult stats;
};

struct SweepSpec {
  enum class Kind { injection_layer, mix_ratio } kind = Kind::injection_layer;
  std::vector<double> values;
};

/// Mix ratios evaluated for in-manifold noise scales.
inline const std::vector<double> kMixRatioPresets{0.10, 0.12, 0.15, 0.20};

std::vector<SweepRow> sensitivity_sweep(const EncoderConfig& model_cfg, const TextDataset& train,
                                        const TextDataset& dev, const TrainConfig& base, const SweepSpec& sweep,
                                        std::span<const std::uint64_t> seeds);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

struct BenchParams {
  std::size_t embed_dim = 64;
  std::vector<std::size_t> seq_lens{64, 128, 256, 512, 1024};  // standard noise: M*d grows with M
  std::vector<std::size_t> ks{5, 10, 20, 40};                 // in-manifold sampling
  std::size_t vocab = 4000;                                   // N for the in-manifold bases
  std::vector<std::size_t> index_sizes{1000, 2000, 4000, 8000};  // knn query cost vs N
  std::size_t manifold_tokens = 64;                           // M for in-manifold sampling
  std::size_t repetitions = 7;
  double min_batch_seconds = 2e-3;  // inner repetitions until a timing sample is this long
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchRow {
  std::string kind;  // standard_noise | inmanifold_sampling | knn_query
  std::size_t size = 0;  // M*d, k, or N
  double median_seconds = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double standard_exponent = 0.0;    // vs M*d
  double inmanifold_k_exponent = 0.0;  // vs k
  double knn_n_exponent = 0.0;       // vs N
};

BenchReport bench_complexity(const BenchParams& p);

}  // namespace lnsr
