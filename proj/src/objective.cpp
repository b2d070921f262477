#include "lnsr/objective.hpp"

#include <algorithm>

#include "lnsr/errors.hpp"
#include "lnsr/ops.hpp"

namespace lnsr {

std::string to_string(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::ft: return "ft";
    case ObjectiveMode::ft_noise_only: return "ft_noise_only";
    case ObjectiveMode::lnsr_standard: return "lnsr_standard";
    case ObjectiveMode::lnsr_inmanifold: return "lnsr_inmanifold";
  }
  return "?";
}

ObjectiveMode parse_objective_mode(const std::string& s) {
  if (s == "ft") return ObjectiveMode::ft;
  if (s == "ft_noise_only") return ObjectiveMode::ft_noise_only;
  if (s == "lnsr_standard") return ObjectiveMode::lnsr_standard;
  if (s == "lnsr_inmanifold") return ObjectiveMode::lnsr_inmanifold;
  throw ValidationError("unknown objective mode '" + s + "'");
}

void RegularizerConfig::validate(std::size_t num_layers) const {
  if (injection_layer > num_layers) {
    throw ValidationError("reg.injection_layer " + std::to_string(injection_layer) + " exceeds num_layers " +
                          std::to_string(num_layers));
  }
  const auto expected = num_layers - injection_layer + 1;
  if (lambda.empty() || (lambda.size() != 1 && lambda.size() != expected)) {
    throw ValidationError("reg.lambda needs 1 or " + std::to_string(expected) + " entries, got " +
                          std::to_string(lambda.size()));
  }
  if (std::any_of(lambda.begin(), lambda.end(), [](double l) { return !(l >= 0.0); })) {
    throw ValidationError("reg.lambda entries must be >= 0");
  }
}

std::vector<double> RegularizerConfig::weights(std::size_t num_layers) const {
  validate(num_layers);
  const auto n = num_layers - injection_layer + 1;
  if (lambda.size() == 1) return std::vector<double>(n, lambda.front());
  return lambda;
}

LnsrTerm lnsr_term(const ActivationTrace& clean, const ActivationTrace& perturbed,
                   const RegularizerConfig& cfg) {
  if (clean.layers.size() != perturbed.layers.size() || clean.layers.empty()) {
    throw ContractError("lnsr_term: trace lengths differ (" + std::to_string(clean.layers.size()) +
                        " vs " + std::to_string(perturbed.layers.size()) + ")");
  }
  if (perturbed.injected_layer && *perturbed.injected_layer != cfg.injection_layer) {
    throw ContractError("lnsr_term: perturbed trace was injected at layer " +
                        std::to_string(*perturbed.injected_layer) + ", config says " +
                        std::to_string(cfg.injection_layer));
  }
  const auto L = clean.layers.size() - 1;
  const auto w = cfg.weights(L);
  std::vector<double> mask(clean.valid.begin(), clean.valid.end());
  const auto valid_rows = static_cast<double>(std::count(clean.valid.begin(), clean.valid.end(), 1));

  LnsrTerm out;
  Tensor total;
  for (std::size_t r = cfg.injection_layer; r <= L; ++r) {
    auto diff = sub(perturbed.layers[r], clean.layers[r]);
    if (!mask.empty()) diff = mask_rows(diff, mask);
    auto sq = squared_norm(diff);
    if (cfg.norm_reduction == NormReduction::mean_squares) {
      const double denom = (mask.empty() ? static_cast<double>(diff.rows()) : valid_rows) *
                           static_cast<double>(diff.cols());
      sq = scale(sq, 1.0 / denom);
    }
    const double lam = w[r - cfg.injection_layer];
    out.breakdown.per_layer_terms.push_back(sq.item());
    auto term = scale(sq, lam);
    total = total.defined() ? add(total, term) : term;
  }
  out.value = total;
  out.breakdown.reg_term = total.item();
  return out;
}

Tensor task_loss(const Tensor& logits, const Target& target) {
  if (const auto* label = std::get_if<std::size_t>(&target)) return cross_entropy(logits, *label);
  const double y = std::get<double>(target);
  return mse(logits, std::span<const double>(&y, 1));
}

Tensor assemble_objective(const Tensor& clean_logits, const std::optional<Tensor>& perturbed_logits,
                          const Target& target, const std::optional<Tensor>& reg, ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::ft:
      return task_loss(clean_logits, target);
    case ObjectiveMode::ft_noise_only:
      require(perturbed_logits.has_value(), "ft_noise_only needs perturbed logits");
      return task_loss(*perturbed_logits, target);
    case ObjectiveMode::lnsr_standard:
    case ObjectiveMode::lnsr_inmanifold: {
      auto loss = task_loss(clean_logits, target);
      return reg ? add(loss, *reg) : loss;
    }
  }
  throw ContractError("unknown objective mode");
}

}  // namespace lnsr
