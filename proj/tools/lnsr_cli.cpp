// Command-line front end: training runs, theory checks and diagnostics.
// Every command writes `<command>-<timestamp>.csv` into --out.

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lnsr/config.hpp"
#include "lnsr/csv.hpp"
#include "lnsr/diagnostics.hpp"
#include "lnsr/errors.hpp"
#include "lnsr/manifold.hpp"
#include "lnsr/theory.hpp"
#include "lnsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace lnsr;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

ExperimentConfig resolve(const Globals& g) {
  auto cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) cfg.train.seed = *g.seed;
  return cfg;
}

fs::path output_for(const Globals& g, const std::string& command) {
  fs::create_directories(g.out);
  auto p = timestamped_path(g.out, command);
  std::cout << "wrote " << p.string() << "\n";
  return p;
}

std::vector<double> gaussian_point(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> x(d);
  for (auto& e : x) e = nd(rng);
  return x;
}

void cmd_train(const Globals& g, const std::string& checkpoint) {
  auto cfg = resolve(g);
  auto [train, dev] = load_datasets(cfg);
  cfg.validate();
  const auto r = run_training(cfg.model, train, dev, cfg.train);
  write_run_csv(r, output_for(g, "train"));
  std::cout << r.config_echo << "\n"
            << "train_metric=" << format_double(r.final_train_metric)
            << " dev_metric=" << format_double(r.final_dev_metric)
            << " gap=" << format_double(r.generalization_gap) << " wall_time_s=" << r.wall_time_s << "\n";
  if (r.manifold_fallbacks > 0) std::cout << "manifold_fallbacks=" << r.manifold_fallbacks << "\n";
  if (!checkpoint.empty()) save_checkpoint(r.model, checkpoint);
}

void cmd_gap_report(const Globals& g, const std::vector<std::string>& modes) {
  auto cfg = resolve(g);
  auto [train, dev] = load_datasets(cfg);
  cfg.validate();
  const auto path = output_for(g, "gap-report");
  CsvWriter w(path, {"mode", "row", "seed", "train_metric", "dev_metric", "gap"});
  for (const auto& m : modes) {
    auto tc = cfg.train;
    tc.reg.mode = parse_objective_mode(m);
    tc.validate(cfg.model);
    auto runs_path = path;
    runs_path.replace_filename(path.stem().string() + "-" + m + "-runs.csv");
    const auto res = multi_seed(cfg.model, train, dev, tc, cfg.seeds, runs_path);
    for (const auto& row : res.rows) {
      w.field(res.mode).field("run").field(static_cast<std::size_t>(row.seed));
      w.field(row.train_metric).field(row.dev_metric).field(row.gap);
      w.end_row();
    }
    const std::pair<const char*, double SummaryStats::*> stats[] = {
        {"mean", &SummaryStats::mean}, {"std", &SummaryStats::std}, {"max", &SummaryStats::max}};
    for (const auto& [name, member] : stats) {
      w.field(res.mode).field(name).field("");
      w.field("").field(res.dev.*member).field(res.gap.*member);
      w.end_row();
    }
    std::cout << res.mode << ": dev mean=" << format_double(res.dev.mean) << " std=" << format_double(res.dev.std)
              << " gap mean=" << format_double(res.gap.mean) << "\n";
  }
}

void cmd_sweep(const Globals& g) {
  auto cfg = resolve(g);
  auto [train, dev] = load_datasets(cfg);
  cfg.validate();
  const auto rows = sensitivity_sweep(cfg.model, train, dev, cfg.train, cfg.diagnostics.sweep, cfg.seeds);
  write_sweep_csv(rows, output_for(g, "sweep"));
}

void cmd_verify_claim1(const Globals& g) {
  const auto cfg = resolve(g);
  cfg.validate();
  const auto& t = cfg.theory;
  CsvWriter w(output_for(g, "verify-claim1"),
              {"function", "instance", "sigma", "mc_estimate", "mc_se", "r_j", "r_h_paper", "r_h_exact",
               "r_jh_mc", "claim14_value", "rel_gap_jacobian", "z_exact"});
  auto emit = [&](const char* fn, std::size_t i, const theory::TaylorReport& r) {
    w.field(fn).field(i).field(r.sigma).field(r.mc_estimate).field(r.mc_se).field(r.r_j).field(r.r_h_paper);
    w.field(r.r_h_exact).field(r.r_jh_mc).field(r.claim14_value);
    w.field(std::abs(r.mc_estimate - r.r_j) / r.mc_estimate);
    w.field((r.mc_estimate - r.r_j - r.r_h_exact) / r.mc_se);
    w.end_row();
  };
  std::mt19937_64 rng(cfg.train.seed);
  for (std::size_t i = 0; i < t.instances; ++i) {
    const auto q = theory::random_quadratic(t.dim, rng);
    const auto x = gaussian_point(t.dim, rng);
    theory::Vec jx(t.dim);
    for (std::size_t a = 0; a < t.dim; ++a) {
      jx[a] = q.j[a];
      for (std::size_t b = 0; b < t.dim; ++b) jx[a] += q.h(a, b) * x[b];
    }
    const auto stream = rng();
    for (double sigma : t.sigmas) {
      std::mt19937_64 mc(stream);
      emit("quadratic", i, theory::verify_claim1(q, x, jx, q.h, sigma, t.samples, mc));
    }
  }
  for (std::size_t i = 0; i < t.instances; ++i) {
    const auto net = theory::random_smooth_net(t.dim, t.hidden, 2.0, rng);
    const auto x = gaussian_point(t.dim, rng);
    const auto stream = rng();
    for (double sigma : t.sigmas) {
      // Same draws at every sigma, so the gaps differ only through sigma.
      std::mt19937_64 mc(stream);
      emit("network", i, theory::verify_claim1(net, x, net.gradient(x), net.hessian(x), sigma, t.samples, mc));
    }
  }
}

void cmd_cross_term(const Globals& g, std::size_t pairs) {
  const auto cfg = resolve(g);
  cfg.validate();
  const auto& t = cfg.theory;
  CsvWriter w(output_for(g, "cross-term"),
              {"instance", "sigma", "mean", "standard_error", "abs_over_se", "within_3se"});
  std::mt19937_64 rng(cfg.train.seed);
  const double sigma = t.sigmas.front();
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto q = theory::random_quadratic(t.dim, rng);
    const auto est = theory::cross_term_mc(q.j, q.h, sigma, t.samples, rng);
    const double z = est.standard_error > 0.0 ? std::abs(est.mean) / est.standard_error : 0.0;
    w.field(i).field(sigma).field(est.mean).field(est.standard_error).field(z).field(z <= 3.0 ? 1 : 0);
    w.end_row();
  }
}

void cmd_noise_curve(const Globals& g, const std::string& checkpoint, bool all_layers, bool passthrough) {
  auto cfg = resolve(g);
  auto [train, dev] = load_datasets(cfg);
  cfg.validate();
  auto model = checkpoint.empty() ? build_encoder(cfg.model, cfg.train.seed) : load_checkpoint(checkpoint);
  if (passthrough) model.make_blocks_passthrough();
  const auto& d = cfg.diagnostics;
  const auto n = std::min(d.probe_count, dev.examples.size());
  std::span<const Example> probes(dev.examples.data(), n);
  const auto L = model.config().num_layers;
  std::vector<std::size_t> layers;
  if (all_layers) {
    for (std::size_t b = 1; b <= L; ++b) layers.push_back(b);
  } else {
    layers.push_back(d.injection_layer);
  }
  CsvWriter w(output_for(g, "noise-curve"), {"injection_layer", "rho", "tap", "layer", "ratio", "probe_count"});
  for (auto b : layers) {
    const auto c = error_ratio_curve(model, probes, b, d.rho, cfg.train.seed, cfg.train.noise.granularity);
    for (std::size_t i = 0; i < c.ratios.size(); ++i) {
      w.field(b).field(c.rho).field("layer_input").field(b + i).field(c.ratios[i]).field(c.probe_count);
      w.end_row();
    }
    w.field(b).field(c.rho).field("final_output").field(L).field(c.output_ratio).field(c.probe_count);
    w.end_row();
  }
}

void cmd_pca_spectrum(const Globals& g) {
  const auto cfg = resolve(g);
  cfg.validate();
  const auto& d = cfg.diagnostics;
  const auto set = synth_manifold(d.pca_points, d.pca_dim, d.pca_intrinsic, d.pca_curvature, cfg.train.seed);
  const auto manifold = pca_noise_spectrum(
      inmanifold_noise_batch(set.points, d.pca_samples, cfg.train.knn_k, 1.0, cfg.train.seed + 1), "in_manifold");
  std::mt19937_64 rng(cfg.train.seed + 2);
  const auto standard = pca_noise_spectrum(sample_standard_noise({d.pca_samples, d.pca_dim}, 1.0, rng), "standard");
  CsvWriter w(output_for(g, "pca-spectrum"), {"source", "rank", "eigenvalue", "cumulative_mass"});
  for (const auto* rep : {&manifold, &standard}) {
    double cum = 0.0;
    for (std::size_t i = 0; i < rep->eigenvalues.size(); ++i) {
      cum += rep->eigenvalues[i];
      w.field(rep->source).field(i + 1).field(rep->eigenvalues[i]).field(cum);
      w.end_row();
    }
    std::cout << rep->source << ": top-" << d.pca_intrinsic << " mass "
              << format_double(rep->top_mass(d.pca_intrinsic)) << "\n";
  }
}

void cmd_bench(const Globals& g) {
  const auto cfg = resolve(g);
  auto p = cfg.bench;
  p.seed = cfg.train.seed;
  const auto rep = bench_complexity(p);
  CsvWriter w(output_for(g, "bench"), {"kind", "size", "median_seconds", "fitted_exponent"});
  for (const auto& r : rep.rows) {
    const double e = r.kind == "standard_noise"        ? rep.standard_exponent
                     : r.kind == "inmanifold_sampling" ? rep.inmanifold_k_exponent
                                                       : rep.knn_n_exponent;
    w.field(r.kind).field(r.size).field(r.median_seconds).field(e);
    w.end_row();
  }
  std::cout << "standard noise exponent vs M*d: " << rep.standard_exponent << "\n"
            << "in-manifold exponent vs k: " << rep.inmanifold_k_exponent << "\n"
            << "knn exponent vs N: " << rep.knn_n_exponent << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise noise stability regularization toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config ([section] key = value)");
  app.add_option("--seed", g.seed, "Seed overriding train.seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  std::string checkpoint;
  std::vector<std::string> modes{"ft", "lnsr_standard"};
  std::size_t pairs = 20;
  bool all_layers = false, passthrough = false;

  auto* train = app.add_subcommand("train", "Train one model and write per-epoch metrics");
  train->add_option("--checkpoint", checkpoint, "Save the trained model here");
  app.add_subcommand("sweep", "Multi-seed sensitivity sweep over injection layers or mix ratios");
  app.add_subcommand("verify-claim1", "Monte-Carlo check of the noise-stability expansion");
  auto* cross = app.add_subcommand("cross-term", "Monte-Carlo estimate of the Jacobian-Hessian cross term");
  cross->add_option("--pairs", pairs, "Random (J, H) pairs")->capture_default_str();
  auto* curve = app.add_subcommand("noise-curve", "Error-ratio curve of injected noise through the encoder");
  curve->add_option("--checkpoint", checkpoint, "Model to probe (random init when omitted)");
  curve->add_flag("--all-layers", all_layers, "Inject at every layer 1..L");
  curve->add_flag("--passthrough", passthrough, "Turn every block into an identity map");
  app.add_subcommand("pca-spectrum", "PCA spectra of in-manifold and standard noise batches");
  app.add_subcommand("bench", "Timing and scaling exponents of noise generation");
  auto* gap = app.add_subcommand("gap-report", "Generalization gap statistics over seeds");
  gap->add_option("--modes", modes, "Objective modes to compare")->delimiter(',')->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const auto name = sub->get_name();
    if (name == "train") cmd_train(g, checkpoint);
    else if (name == "sweep") cmd_sweep(g);
    else if (name == "verify-claim1") cmd_verify_claim1(g);
    else if (name == "cross-term") cmd_cross_term(g, pairs);
    else if (name == "noise-curve") cmd_noise_curve(g, checkpoint, all_layers, passthrough);
    else if (name == "pca-spectrum") cmd_pca_spectrum(g);
    else if (name == "bench") cmd_bench(g);
    else if (name == "gap-report") cmd_gap_report(g, modes);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
