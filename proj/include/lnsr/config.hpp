#pragma once

// Experiment configuration read from "[section]" / "key = value" text.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lnsr/data.hpp"
#include "lnsr/diagnostics.hpp"
#include "lnsr/encoder.hpp"
#include "lnsr/trainer.hpp"

namespace lnsr {

struct DataConfig {
  enum class Source { synthetic, tsv } source = Source::synthetic;
  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  SynthClassificationParams synth;
};

struct TheoryConfig {
  std::size_t dim = 8;
  std::size_t instances = 10;
  std::size_t samples = 200000;
  std::vector<double> sigmas{0.1, 0.05, 0.01};
  std::size_t hidden = 16;  // width of the smooth network used by verify-claim1
};

struct DiagnosticsConfig {
  std::size_t probe_count = kDefaultProbeCount;
  double rho = kDefaultRelMagnitude;
  std::size_t injection_layer = 1;
  // pca-spectrum
  std::size_t pca_samples = 10000;
  std::size_t pca_dim = 128;
  std::size_t pca_intrinsic = 10;
  std::size_t pca_points = 10000;
  double pca_curvature = 0.0;
  // sweep
  SweepSpec sweep{SweepSpec::Kind::mix_ratio, kMixRatioPresets};
};

struct ExperimentConfig {
  EncoderConfig model;
  DataConfig data;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  TheoryConfig theory;
  DiagnosticsConfig diagnostics;
  BenchParams bench;

  /// Cross-field checks; throws ValidationError.
  void validate() const;
};

/// Unknown sections or keys and malformed values raise ValidationError with
/// the 1-based line number.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Train/dev splits described by `cfg.data`; the model's vocabulary size is
/// widened to cover a TSV vocabulary when needed.
std::pair<TextDataset, TextDataset> load_datasets(ExperimentConfig& cfg);

}  // namespace lnsr
