#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>

#include "lnsr/tensor.hpp"

namespace lnsr {

enum class NoiseMode { none, standard, in_manifold };

/// How a relative magnitude rho becomes a scale factor.
enum class RescaleRule {
  norm_ratio,       // ||eps'|| = rho * ||x||
  literal_squared,  // eps' = eps * rho * ||x||^2 / ||eps||^2
};

enum class RescaleGranularity { per_token, per_sequence };

struct NoiseSpec {
  NoiseMode mode = NoiseMode::standard;
  double sigma = 1.0;
  // When set, sampled noise is rescaled relative to the clean activation and
  // sigma only shapes the direction distribution.
  std::optional<double> rel_magnitude = 0.05;
  std::size_t injection_layer = 1;
  std::uint64_t seed = 0;
  RescaleRule rule = RescaleRule::norm_ratio;
  RescaleGranularity granularity = RescaleGranularity::per_token;

  void validate() const;
};

inline constexpr double kDefaultRelMagnitude = 0.05;

/// i.i.d. N(0, sigma^2) entries.
Tensor sample_standard_noise(const Shape& shape, double sigma, std::mt19937_64& rng);

/// noise * (rho * ||x|| / ||noise||). Zero x gives zero noise.
Tensor rescale_relative(const Tensor& noise, const Tensor& x, double rho,
                        RescaleRule rule = RescaleRule::norm_ratio);

/// Applies rescale_relative row by row (per token) or to the whole matrix.
/// Rows whose `valid` flag is 0 are zeroed and skipped.
Tensor rescale_rows(const Tensor& noise, const Tensor& x, double rho, RescaleGranularity granularity,
                    std::span<const std::uint8_t> valid = {},
                    RescaleRule rule = RescaleRule::norm_ratio);

}  // namespace lnsr
