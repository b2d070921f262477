#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lnsr/data.hpp"
#include "lnsr/encoder.hpp"
#include "lnsr/noise.hpp"
#include "lnsr/objective.hpp"

namespace lnsr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One AdamW update at step t >= 1 (bias-corrected moments, decoupled
/// weight decay). `grads[i]` pairs with `params[i]`.
void adam_step(std::span<Tensor> params, const std::vector<std::vector<double>>& grads, AdamState& state,
               std::size_t t, const AdamConfig& cfg);

/// Linear warmup over ceil(warmup_ratio * total) steps, then linear decay
/// to zero at `total`.
double lr_at(std::size_t step, std::size_t total_steps, double warmup_ratio, double base_lr);

inline constexpr double kWarmupClassification = 0.06;
inline constexpr double kWarmupQuestionAnswering = 0.10;
/// Learning rates used for pre-trained backbones; too small for the
/// randomly initialized toy encoders, whose default is 1e-3.
inline const std::vector<double> kPretrainedLrPresets{2e-5, 3e-5, 5e-5};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double warmup_ratio = kWarmupClassification;
  std::size_t epochs = 3;
  std::uint64_t seed = 0;
  std::size_t knn_k = 10;
  NoiseSpec noise;
  RegularizerConfig reg;

  void validate(const EncoderConfig& model) const;
  AdamConfig adam() const { return {lr, beta1, beta2, adam_eps, weight_decay}; }
  /// Noise family actually drawn for this objective mode.
  NoiseMode effective_noise_mode() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_metric = 0.0;
  double dev_metric = 0.0;
};

struct RunResult {
  std::vector<EpochRecord> epochs;
  double final_train_metric = 0.0;
  double final_dev_metric = 0.0;
  double generalization_gap = 0.0;  // train metric - dev metric
  double wall_time_s = 0.0;
  std::string config_echo;
  std::size_t manifold_fallbacks = 0;
  EncoderModel model;
};

/// Accuracy for classification, Pearson correlation for regression.
double evaluate(const EncoderModel& model, const TextDataset& data);

RunResult run_training(const EncoderConfig& model_cfg, const TextDataset& train, const TextDataset& dev,
                       const TrainConfig& cfg);

void write_run_csv(const RunResult& r, const std::filesystem::path& path);

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double max = 0.0;
};

SummaryStats summarize(std::span<const double> values);

struct SeedRow {
  std::uint64_t seed = 0;
  double train_metric = 0.0;
  double dev_metric = 0.0;
  double gap = 0.0;
};

struct MultiSeedResult {
  std::string mode;
  std::vector<SeedRow> rows;
  SummaryStats dev;
  SummaryStats gap;
};

/// Runs `tmpl` once per seed. Rows are appended to `partial_csv` as runs
/// finish, so a failing run leaves the completed ones on disk.
MultiSeedResult multi_seed(const EncoderConfig& model_cfg, const TextDataset& train, const TextDataset& dev,
                           const TrainConfig& tmpl, std::span<const std::uint64_t> seeds,
                           const std::optional<std::filesystem::path>& partial_csv = std::nullopt);

}  // namespace lnsr
