// umood: a desk-scale out-of-distribution detection laboratory.
//
// Verbs: train, probe, estimate, um, umap, oe, score, eval, phenomenon,
// ablation, theory, report. Every command is deterministic given
// (--config, --seed); UMOOD_THREADS caps parallel seed execution.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error,
// 4 numeric/training failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "umood/error.hpp"
#include "umood/harness.hpp"
#include "umood/version.hpp"

namespace {

umood::Config load_config(const std::string& path, const std::string& seed_override) {
  umood::Config cfg =
      path.empty() ? umood::Config() : umood::Config::parse_file(path);
  if (!seed_override.empty()) {
    cfg.set("seeds", seed_override);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"umood: out-of-distribution detection laboratory"};
  app.set_version_flag("--version", umood::kCodeVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string seed_override;
  std::string out_dir = "runs";
  std::string ckpt_path;

  app.add_option("--config", config_path, "experiment config file (key = value lines)");
  app.add_option("--seed", seed_override, "override the config seed list with a single seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--ckpt", ckpt_path, "checkpoint path (UMCKPT1)");

  auto* train = app.add_subcommand("train", "train the baseline classifier per seed");
  auto* probe = app.add_subcommand("probe", "mask-ratio probe sweep on a checkpoint");
  auto* estimate = app.add_subcommand("estimate", "estimate the forgetting constraint");
  auto* um = app.add_subcommand("um", "forgetting fine-tune from a checkpoint");
  auto* umap = app.add_subcommand("umap", "learn a pruning mask over a frozen checkpoint");
  auto* oe = app.add_subcommand("oe", "outlier-exposure fine-tune from a checkpoint");
  auto* score = app.add_subcommand("score", "per-sample scores CSV for a checkpoint");
  auto* eval = app.add_subcommand("eval", "metrics CSV for a checkpoint");
  auto* phenomenon =
      app.add_subcommand("phenomenon", "per-epoch OOD metric trajectory experiment");
  auto* ablation = app.add_subcommand("ablation", "typical/atypical fine-tuning comparison");
  auto* theory = app.add_subcommand("theory", "Gaussian-mixture margin-budget sweep");
  auto* report = app.add_subcommand("report", "render SVG curves and a summary from run CSVs");

  std::string report_dir;
  report->add_option("dir", report_dir, "directory holding run.csv files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto needs_ckpt = [&](const char* verb) {
    if (ckpt_path.empty()) {
      std::cerr << "umood " << verb << ": --ckpt is required\n";
      std::exit(2);
    }
  };

  try {
    const umood::Config cfg = load_config(config_path, seed_override);
    if (train->parsed()) {
      umood::cmd_train(cfg, out_dir);
    } else if (probe->parsed()) {
      needs_ckpt("probe");
      umood::cmd_probe(cfg, ckpt_path, out_dir);
    } else if (estimate->parsed()) {
      needs_ckpt("estimate");
      umood::cmd_estimate(cfg, ckpt_path, out_dir);
    } else if (um->parsed()) {
      needs_ckpt("um");
      umood::cmd_um(cfg, ckpt_path, out_dir);
    } else if (umap->parsed()) {
      needs_ckpt("umap");
      umood::cmd_umap(cfg, ckpt_path, out_dir);
    } else if (oe->parsed()) {
      needs_ckpt("oe");
      umood::cmd_oe(cfg, ckpt_path, out_dir);
    } else if (score->parsed()) {
      needs_ckpt("score");
      umood::cmd_score(cfg, ckpt_path, out_dir);
    } else if (eval->parsed()) {
      needs_ckpt("eval");
      umood::cmd_eval(cfg, ckpt_path, out_dir);
    } else if (phenomenon->parsed()) {
      umood::cmd_phenomenon(cfg, out_dir);
    } else if (ablation->parsed()) {
      needs_ckpt("ablation");
      umood::cmd_ablation(cfg, ckpt_path, out_dir);
    } else if (theory->parsed()) {
      umood::cmd_theory(cfg, out_dir);
    } else if (report->parsed()) {
      umood::cmd_report(report_dir.empty() ? out_dir : report_dir);
    }
  } catch (const umood::ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const umood::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 3;
  } catch (const umood::TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 4;
  } catch (const umood::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
