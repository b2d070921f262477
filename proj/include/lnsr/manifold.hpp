#pragma once

// Exact neighbor search and in-manifold noise synthesis.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "lnsr/tensor.hpp"

namespace lnsr {

inline constexpr std::size_t kDefaultNeighbors = 10;

/// Every difference vector vanished after orthogonalization.
class DegenerateNeighborhood : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Neighbor {
  std::size_t row;
  double distance;  // squared Euclidean
};

/// Brute-force exact index over the rows of an [N x d] matrix.
class NeighborIndex {
 public:
  explicit NeighborIndex(const Tensor& vectors);
  NeighborIndex(std::vector<double> values, std::size_t n, std::size_t d);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }

  /// k nearest rows, ascending by distance, ties to the lower row index.
  /// With exclusion on, the lowest-index row identical to `query` is skipped.
  std::vector<Neighbor> knn(std::span<const double> query, std::size_t k,
                            bool exclude_exact_match = false) const;

  void save(const std::filesystem::path& path) const;
  static NeighborIndex load(const std::filesystem::path& path);

 private:
  std::vector<double> values_;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
};

NeighborIndex build_index(const Tensor& vectors);

struct OrthoBasis {
  std::vector<std::vector<double>> basis;  // unit, pairwise orthogonal
  std::vector<double> origin;
  std::size_t source_count = 0;

  std::size_t size() const { return basis.size(); }
};

inline constexpr double kGramSchmidtDropTol = 1e-8;

/// Modified Gram-Schmidt with one re-orthogonalization pass. A vector is
/// dropped when its residual falls below kGramSchmidtDropTol times its
/// original norm. Throws DegenerateNeighborhood when nothing survives.
OrthoBasis gram_schmidt(const std::vector<std::vector<double>>& diffs,
                        std::vector<double> origin = {});

/// Differences between x and its k nearest neighbors, orthonormalized.
OrthoBasis neighborhood_basis(const NeighborIndex& index, std::span<const double> x, std::size_t k,
                              bool exclude_exact_match = true);

/// eps = sum_j c_j * basis_j with c_j ~ N(0, sigma^2); with mix_ratio set
/// the result is rescaled to norm mix_ratio * ||x||.
Tensor sample_inmanifold_noise(std::span<const double> x, const OrthoBasis& basis, double sigma,
                               std::mt19937_64& rng, std::optional<double> mix_ratio = std::nullopt);

/// Writes sum_j c_j * basis_j, c_j ~ N(0, sigma^2), into `out` (overwrites).
void draw_inmanifold(std::span<double> out, const OrthoBasis& basis, double sigma, std::mt19937_64& rng);

/// min_w ||x - sum_j w_j n_j||^2 by unconstrained least squares.
double lle_reconstruction_error(std::span<const double> x,
                                const std::vector<std::vector<double>>& neighbors);

/// Per-token in-manifold noise for the embedding layer. Neighborhoods are
/// taken among the rows of a token-embedding table; bases are cached per
/// token id until the table is replaced.
class InManifoldSampler {
 public:
  InManifoldSampler(const Tensor& embedding_table, std::size_t k);

  /// Noise for an [M x d] activation whose first ids.size() rows are the
  /// tokens `ids`; the remaining rows are padding and stay zero. Tokens
  /// with degenerate neighborhoods fall back to standard Gaussian noise.
  Tensor sample(std::span<const std::size_t> ids, const Tensor& activation, double sigma,
                std::optional<double> mix_ratio, std::mt19937_64& rng);

  const OrthoBasis& basis_for(std::size_t token_id);
  std::size_t fallback_count() const { return fallbacks_; }
  std::size_t k() const { return k_; }

 private:
  NeighborIndex index_;
  std::size_t k_;
  std::unordered_map<std::size_t, std::optional<OrthoBasis>> cache_;
  std::size_t fallbacks_ = 0;
};

}  // namespace lnsr
