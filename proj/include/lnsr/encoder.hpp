#pragma once

// Toy pre-LN transformer encoder with noise-injection and recording taps.
//
// Layer numbering: layer 0 is the embedding layer (input = token vectors,
// output = token + position embeddings); layer r in [1, L] is transformer
// block r. The trace stores every layer output, so trace[r] is the output
// of layer r and trace[r-1] is the input of block r. Injecting at layer b
// adds noise to that layer's input.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lnsr/tensor.hpp"

namespace lnsr {

struct EncoderConfig {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 16;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 32;
  std::size_t max_seq_len = 16;
  std::size_t num_classes = 2;  // ignored when regression is set
  bool regression = false;
  double dropout_rate = 0.0;
  // Whether dropout is also active in the perturbed pass. Off by default.
  bool dropout_in_perturbed = false;
  double init_std = 0.02;

  /// Throws ValidationError naming every offending field.
  void validate() const;
  std::size_t output_dim() const { return regression ? 1 : num_classes; }
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

class EncoderModel {
 public:
  EncoderModel() = default;
  EncoderModel(EncoderConfig config, std::uint64_t init_seed);

  const EncoderConfig& config() const { return config_; }

  Tensor token_embedding;     // [vocab x d]
  Tensor position_embedding;  // [M x d]
  std::vector<BlockParams> blocks;
  Tensor final_ln_gain, final_ln_bias;
  Tensor head_weight;  // [d x C]
  Tensor head_bias;    // [C]

  /// Every trainable tensor, in checkpoint declaration order.
  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  /// Zeroes the output projections of every block so each block is the
  /// identity map on its residual stream.
  void make_blocks_passthrough();

  /// Deep copy with fresh parameter leaves.
  EncoderModel clone() const;

 private:
  EncoderConfig config_;
};

EncoderModel build_encoder(const EncoderConfig& config, std::uint64_t init_seed);

struct Injection {
  std::size_t layer = 1;  // b
  Tensor noise;           // [M x d]
};

struct ActivationTrace {
  std::vector<Tensor> layers;  // L + 1 entries, each [M x d]
  std::optional<std::size_t> injected_layer;
  Tensor injected_noise;
  std::vector<std::uint8_t> valid;  // 1 for real tokens, 0 for padding

  /// Input of layer `layer` as seen by the pass (noise included when
  /// injected there). Layer 0 input is the raw token-embedding rows.
  Tensor layer_input(std::size_t layer) const;
  std::vector<Tensor> inputs;  // L + 1 entries; see layer_input()
};

struct ForwardOptions {
  double dropout_rate = 0.0;
  std::mt19937_64* rng = nullptr;  // required when dropout_rate > 0
};

struct ForwardResult {
  Tensor logits;  // [C]
  ActivationTrace trace;
};

/// Runs the encoder on `tokens` (unpadded, length <= M). Padding to M uses
/// id 0 and is masked from attention keys and from pooling.
ForwardResult forward_with_taps(const EncoderModel& model, std::span<const std::size_t> tokens,
                                const std::optional<Injection>& injection = std::nullopt,
                                const ForwardOptions& options = {});

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace lnsr
