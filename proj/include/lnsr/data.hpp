#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lnsr/objective.hpp"
#include "lnsr/tensor.hpp"

namespace lnsr {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;

class Vocabulary {
 public:
  Vocabulary();  // holds <pad> and <unk>

  std::size_t add(const std::string& token);
  /// Id of `token`, or kUnkId when absent.
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  bool contains(const std::string& token) const { return ids_.contains(token); }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> tokens_;
};

enum class Split { train, dev };

struct Example {
  std::vector<std::size_t> ids;  // padded to max_seq_len with kPadId
  std::size_t length = 0;        // real tokens
  Target target;

  std::span<const std::size_t> tokens() const { return {ids.data(), length}; }
};

struct TextDataset {
  std::vector<Example> examples;
  Vocabulary vocab;
  std::size_t num_classes = 0;  // 0 for regression
  bool regression = false;
  Split split = Split::train;
  std::size_t max_seq_len = 0;

  std::size_t size() const { return examples.size(); }
};

struct TsvOptions {
  std::size_t max_seq_len = 64;  // longer texts are truncated
  bool regression = false;
};

/// Reads "label<TAB>text" lines; whitespace tokenization. Builds the
/// vocabulary from this file (train split).
TextDataset load_tsv(const std::filesystem::path& path, const TsvOptions& options = {});
/// Dev split: reuses a frozen vocabulary; unseen tokens map to kUnkId.
TextDataset load_tsv(const std::filesystem::path& path, const Vocabulary& frozen, std::size_t num_classes,
                     const TsvOptions& options = {});

struct SynthClassificationParams {
  std::size_t n_per_class = 100;
  std::size_t num_classes = 2;
  std::size_t seq_len = 16;
  std::size_t vocab_size = 64;
  double margin = 0.5;  // probability that a token is drawn from its class signature
  std::uint64_t seed = 0;
  std::optional<std::size_t> dev_per_class;  // defaults to n_per_class
  bool variable_length = true;               // lengths uniform in [seq_len/2, seq_len]

  void validate() const;
};

/// Class-conditional token sequences with disjoint train/dev splits.
std::pair<TextDataset, TextDataset> synth_classification(const SynthClassificationParams& p);

struct SyntheticManifoldSet {
  Tensor points;  // [n x d]
  std::size_t intrinsic_dim = 0;
  double curvature = 0.0;
  std::vector<std::vector<double>> tangent;  // k orthonormal columns of the linear part
  std::string description;
};

/// Points x = c + A u + curvature * B (u o u), u uniform in [-1, 1]^k.
SyntheticManifoldSet synth_manifold(std::size_t n, std::size_t d, std::size_t k_true, double curvature,
                                    std::uint64_t seed);

}  // namespace lnsr
