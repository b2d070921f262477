#include "lnsr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lnsr/errors.hpp"

namespace lnsr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ValidationError("expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ValidationError("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ValidationError("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (t.empty()) throw ValidationError("empty list element in '" + v + "'");
    out.push_back(t);
  }
  if (out.empty()) throw ValidationError("empty list");
  return out;
}

template <class T, class F>
std::vector<T> to_list(const std::string& v, F conv) {
  std::vector<T> out;
  for (const auto& s : split_list(v)) out.push_back(conv(s));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"model.vocab_size", [](auto& c, auto& v) { c.model.vocab_size = to_size(v); }},
      {"model.embed_dim", [](auto& c, auto& v) { c.model.embed_dim = to_size(v); }},
      {"model.num_layers", [](auto& c, auto& v) { c.model.num_layers = to_size(v); }},
      {"model.num_heads", [](auto& c, auto& v) { c.model.num_heads = to_size(v); }},
      {"model.ffn_dim", [](auto& c, auto& v) { c.model.ffn_dim = to_size(v); }},
      {"model.max_seq_len", [](auto& c, auto& v) { c.model.max_seq_len = to_size(v); }},
      {"model.num_classes", [](auto& c, auto& v) { c.model.num_classes = to_size(v); }},
      {"model.regression", [](auto& c, auto& v) { c.model.regression = to_bool(v); }},
      {"model.dropout_rate", [](auto& c, auto& v) { c.model.dropout_rate = to_double(v); }},
      {"model.dropout_in_perturbed", [](auto& c, auto& v) { c.model.dropout_in_perturbed = to_bool(v); }},
      {"model.init_std", [](auto& c, auto& v) { c.model.init_std = to_double(v); }},

      {"data.source",
       [](auto& c, auto& v) {
         if (v == "synthetic") c.data.source = DataConfig::Source::synthetic;
         else if (v == "tsv") c.data.source = DataConfig::Source::tsv;
         else throw ValidationError("data.source must be synthetic or tsv, got '" + v + "'");
       }},
      {"data.train_path", [](auto& c, auto& v) { c.data.train_path = v; }},
      {"data.dev_path", [](auto& c, auto& v) { c.data.dev_path = v; }},
      {"data.n_per_class", [](auto& c, auto& v) { c.data.synth.n_per_class = to_size(v); }},
      {"data.dev_per_class", [](auto& c, auto& v) { c.data.synth.dev_per_class = to_size(v); }},
      {"data.num_classes", [](auto& c, auto& v) { c.data.synth.num_classes = to_size(v); }},
      {"data.seq_len", [](auto& c, auto& v) { c.data.synth.seq_len = to_size(v); }},
      {"data.vocab_size", [](auto& c, auto& v) { c.data.synth.vocab_size = to_size(v); }},
      {"data.margin", [](auto& c, auto& v) { c.data.synth.margin = to_double(v); }},
      {"data.seed", [](auto& c, auto& v) { c.data.synth.seed = to_u64(v); }},
      {"data.variable_length", [](auto& c, auto& v) { c.data.synth.variable_length = to_bool(v); }},

      {"train.lr", [](auto& c, auto& v) { c.train.lr = to_double(v); }},
      {"train.batch_size", [](auto& c, auto& v) { c.train.batch_size = to_size(v); }},
      {"train.beta1", [](auto& c, auto& v) { c.train.beta1 = to_double(v); }},
      {"train.beta2", [](auto& c, auto& v) { c.train.beta2 = to_double(v); }},
      {"train.adam_eps", [](auto& c, auto& v) { c.train.adam_eps = to_double(v); }},
      {"train.weight_decay", [](auto& c, auto& v) { c.train.weight_decay = to_double(v); }},
      {"train.warmup_ratio", [](auto& c, auto& v) { c.train.warmup_ratio = to_double(v); }},
      {"train.epochs", [](auto& c, auto& v) { c.train.epochs = to_size(v); }},
      {"train.seed", [](auto& c, auto& v) { c.train.seed = to_u64(v); }},
      {"train.knn_k", [](auto& c, auto& v) { c.train.knn_k = to_size(v); }},
      {"train.seeds", [](auto& c, auto& v) { c.seeds = to_list<std::uint64_t>(v, to_u64); }},
      {"train.num_seeds",
       [](auto& c, auto& v) {
         const auto n = to_size(v);
         c.seeds.resize(n);
         for (std::size_t i = 0; i < n; ++i) c.seeds[i] = i;
       }},

      {"noise.mode",
       [](auto& c, auto& v) {
         if (v == "none") c.train.noise.mode = NoiseMode::none;
         else if (v == "standard") c.train.noise.mode = NoiseMode::standard;
         else if (v == "in_manifold") c.train.noise.mode = NoiseMode::in_manifold;
         else throw ValidationError("noise.mode must be none, standard or in_manifold, got '" + v + "'");
       }},
      {"noise.sigma", [](auto& c, auto& v) { c.train.noise.sigma = to_double(v); }},
      {"noise.rel_magnitude",
       [](auto& c, auto& v) {
         if (v == "none") c.train.noise.rel_magnitude.reset();
         else c.train.noise.rel_magnitude = to_double(v);
       }},
      {"noise.rule",
       [](auto& c, auto& v) {
         if (v == "norm_ratio") c.train.noise.rule = RescaleRule::norm_ratio;
         else if (v == "literal_squared") c.train.noise.rule = RescaleRule::literal_squared;
         else throw ValidationError("noise.rule must be norm_ratio or literal_squared, got '" + v + "'");
       }},
      {"noise.granularity",
       [](auto& c, auto& v) {
         if (v == "per_token") c.train.noise.granularity = RescaleGranularity::per_token;
         else if (v == "per_sequence") c.train.noise.granularity = RescaleGranularity::per_sequence;
         else throw ValidationError("noise.granularity must be per_token or per_sequence, got '" + v + "'");
       }},
      {"noise.injection_layer",
       [](auto& c, auto& v) {
         c.train.noise.injection_layer = to_size(v);
         c.train.reg.injection_layer = c.train.noise.injection_layer;
       }},

      {"reg.mode", [](auto& c, auto& v) { c.train.reg.mode = parse_objective_mode(v); }},
      {"reg.lambda", [](auto& c, auto& v) { c.train.reg.lambda = to_list<double>(v, to_double); }},
      {"reg.norm_reduction",
       [](auto& c, auto& v) {
         if (v == "sum_squares") c.train.reg.norm_reduction = NormReduction::sum_squares;
         else if (v == "mean_squares") c.train.reg.norm_reduction = NormReduction::mean_squares;
         else throw ValidationError("reg.norm_reduction must be sum_squares or mean_squares, got '" + v + "'");
       }},
      {"reg.injection_layer",
       [](auto& c, auto& v) {
         c.train.reg.injection_layer = to_size(v);
         c.train.noise.injection_layer = c.train.reg.injection_layer;
       }},

      {"theory.dim", [](auto& c, auto& v) { c.theory.dim = to_size(v); }},
      {"theory.instances", [](auto& c, auto& v) { c.theory.instances = to_size(v); }},
      {"theory.samples", [](auto& c, auto& v) { c.theory.samples = to_size(v); }},
      {"theory.sigmas", [](auto& c, auto& v) { c.theory.sigmas = to_list<double>(v, to_double); }},
      {"theory.hidden", [](auto& c, auto& v) { c.theory.hidden = to_size(v); }},

      {"diagnostics.probe_count", [](auto& c, auto& v) { c.diagnostics.probe_count = to_size(v); }},
      {"diagnostics.rho", [](auto& c, auto& v) { c.diagnostics.rho = to_double(v); }},
      {"diagnostics.injection_layer", [](auto& c, auto& v) { c.diagnostics.injection_layer = to_size(v); }},
      {"diagnostics.pca_samples", [](auto& c, auto& v) { c.diagnostics.pca_samples = to_size(v); }},
      {"diagnostics.pca_dim", [](auto& c, auto& v) { c.diagnostics.pca_dim = to_size(v); }},
      {"diagnostics.pca_intrinsic", [](auto& c, auto& v) { c.diagnostics.pca_intrinsic = to_size(v); }},
      {"diagnostics.pca_points", [](auto& c, auto& v) { c.diagnostics.pca_points = to_size(v); }},
      {"diagnostics.pca_curvature", [](auto& c, auto& v) { c.diagnostics.pca_curvature = to_double(v); }},
      {"diagnostics.sweep_kind",
       [](auto& c, auto& v) {
         if (v == "injection_layer") c.diagnostics.sweep.kind = SweepSpec::Kind::injection_layer;
         else if (v == "mix_ratio") c.diagnostics.sweep.kind = SweepSpec::Kind::mix_ratio;
         else throw ValidationError("diagnostics.sweep_kind must be injection_layer or mix_ratio, got '" + v + "'");
       }},
      {"diagnostics.sweep_values",
       [](auto& c, auto& v) { c.diagnostics.sweep.values = to_list<double>(v, to_double); }},

      {"bench.embed_dim", [](auto& c, auto& v) { c.bench.embed_dim = to_size(v); }},
      {"bench.seq_lens", [](auto& c, auto& v) { c.bench.seq_lens = to_list<std::size_t>(v, to_size); }},
      {"bench.ks", [](auto& c, auto& v) { c.bench.ks = to_list<std::size_t>(v, to_size); }},
      {"bench.vocab", [](auto& c, auto& v) { c.bench.vocab = to_size(v); }},
      {"bench.index_sizes", [](auto& c, auto& v) { c.bench.index_sizes = to_list<std::size_t>(v, to_size); }},
      {"bench.manifold_tokens", [](auto& c, auto& v) { c.bench.manifold_tokens = to_size(v); }},
      {"bench.repetitions", [](auto& c, auto& v) { c.bench.repetitions = to_size(v); }},
      {"bench.min_batch_seconds", [](auto& c, auto& v) { c.bench.min_batch_seconds = to_double(v); }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate(model);
  if (data.source == DataConfig::Source::synthetic) {
    data.synth.validate();
    if (data.synth.seq_len > model.max_seq_len) {
      throw ValidationError("data.seq_len exceeds model.max_seq_len");
    }
    if (data.synth.vocab_size > model.vocab_size) {
      throw ValidationError("data.vocab_size exceeds model.vocab_size");
    }
    if (!model.regression && data.synth.num_classes != model.num_classes) {
      throw ValidationError("data.num_classes differs from model.num_classes");
    }
  } else if (data.train_path.empty() || data.dev_path.empty()) {
    throw ValidationError("data.source = tsv needs data.train_path and data.dev_path");
  }
  if (seeds.empty()) throw ValidationError("train.seeds is empty");
  if (theory.dim == 0 || theory.instances == 0 || theory.hidden == 0) {
    throw ValidationError("theory.dim, theory.instances and theory.hidden must be >= 1");
  }
  if (theory.samples < 1000) throw ValidationError("theory.samples must be >= 1000");
  for (double s : theory.sigmas) {
    if (!(s > 0.0)) throw ValidationError("theory.sigmas must be > 0");
  }
  if (diagnostics.probe_count == 0) throw ValidationError("diagnostics.probe_count must be >= 1");
  if (!(diagnostics.rho >= 0.0)) throw ValidationError("diagnostics.rho must be >= 0");
  if (diagnostics.injection_layer < 1 || diagnostics.injection_layer > model.num_layers) {
    throw ValidationError("diagnostics.injection_layer must lie in [1, model.num_layers]");
  }
  if (diagnostics.pca_samples < 2 || diagnostics.pca_dim == 0 || diagnostics.pca_intrinsic == 0 ||
      diagnostics.pca_intrinsic > diagnostics.pca_dim || diagnostics.pca_points <= diagnostics.pca_intrinsic) {
    throw ValidationError("diagnostics.pca_* sizes are inconsistent");
  }
  if (diagnostics.sweep.values.empty()) throw ValidationError("diagnostics.sweep_values is empty");
  bench.validate();
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto where = "config line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']') throw ValidationError(where + "unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      static const std::vector<std::string> known{"model", "data", "train", "noise", "reg",
                                                  "theory", "diagnostics", "bench"};
      if (std::find(known.begin(), known.end(), section) == known.end()) {
        throw ValidationError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected key = value");
    if (section.empty()) throw ValidationError(where + "key outside of any [section]");
    const auto key = section + "." + trim(std::string_view(t).substr(0, eq));
    const auto value = trim(std::string_view(t).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ValidationError(where + "unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + key + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::pair<TextDataset, TextDataset> load_datasets(ExperimentConfig& cfg) {
  if (cfg.data.source == DataConfig::Source::synthetic) return synth_classification(cfg.data.synth);
  TsvOptions opts{cfg.model.max_seq_len, cfg.model.regression};
  auto train = load_tsv(cfg.data.train_path, opts);
  auto dev = load_tsv(cfg.data.dev_path, train.vocab, train.num_classes, opts);
  cfg.model.vocab_size = std::max(cfg.model.vocab_size, train.vocab.size());
  if (!cfg.model.regression) cfg.model.num_classes = std::max(cfg.model.num_classes, train.num_classes);
  return {std::move(train), std::move(dev)};
}

}  // namespace lnsr
