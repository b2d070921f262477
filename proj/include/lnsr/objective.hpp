#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lnsr/encoder.hpp"
#include "lnsr/tensor.hpp"

namespace lnsr {

enum class ObjectiveMode { ft, ft_noise_only, lnsr_standard, lnsr_inmanifold };
enum class NormReduction { sum_squares, mean_squares };

std::string to_string(ObjectiveMode m);
ObjectiveMode parse_objective_mode(const std::string& s);

/// Regularization weights lambda^{b,r} for r in [b, L].
struct RegularizerConfig {
  // One entry broadcasts to every regularized layer; otherwise L-b+1 entries.
  std::vector<double> lambda{1.0};
  ObjectiveMode mode = ObjectiveMode::lnsr_standard;
  NormReduction norm_reduction = NormReduction::sum_squares;
  std::size_t injection_layer = 1;

  void validate(std::size_t num_layers) const;
  std::vector<double> weights(std::size_t num_layers) const;
  bool uses_regularizer() const {
    return mode == ObjectiveMode::lnsr_standard || mode == ObjectiveMode::lnsr_inmanifold;
  }
};

/// Regularization weights reported for the original fine-tuning runs.
inline const std::vector<double> kLambdaPresets{1.0, 0.8, 0.6, 0.4, 0.2};

struct ObjectiveBreakdown {
  double task_loss = 0.0;
  double reg_term = 0.0;
  std::vector<double> per_layer_terms;  // unweighted deviation, layers b..L
};

struct LnsrTerm {
  Tensor value;  // differentiable scalar
  ObjectiveBreakdown breakdown;
};

/// R = sum_r lambda_r * ||perturbed[r] - clean[r]||^2 over non-padding rows.
LnsrTerm lnsr_term(const ActivationTrace& clean, const ActivationTrace& perturbed,
                   const RegularizerConfig& cfg);

using Target = std::variant<std::size_t, double>;  // class label or regression value

/// Cross-entropy for labels, squared error for real targets.
Tensor task_loss(const Tensor& logits, const Target& target);

/// ft: loss on clean logits. ft_noise_only: loss on perturbed logits, R
/// ignored. lnsr_*: clean loss + R.
Tensor assemble_objective(const Tensor& clean_logits, const std::optional<Tensor>& perturbed_logits,
                          const Target& target, const std::optional<Tensor>& reg, ObjectiveMode mode);

}  // namespace lnsr
