#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "umood/config.hpp"
#include "umood/data.hpp"
#include "umood/exposure.hpp"
#include "umood/forgetting.hpp"
#include "umood/masking.hpp"
#include "umood/metrics.hpp"
#include "umood/nn.hpp"
#include "umood/runrecord.hpp"
#include "umood/scoring.hpp"
#include "umood/theory.hpp"

namespace umood {

// ---------------------------------------------------------------------------
// Config resolution. One run = (config, seed); everything a run touches is
// derived deterministically from those two values:
//   benchmark seed   child(data.seed -> run seed)
//   model init       RandomStream(run seed).child(10)
//   mask/constraint  RandomStream(run seed).child(11)
//   loops            their own child(0)/child(1) streams, see nn/exposure
// ---------------------------------------------------------------------------
AtypicalBenchmarkSpec benchmark_spec_from(const Config& cfg, std::uint64_t run_seed);
TrainConfig train_config_from(const Config& cfg, std::uint64_t run_seed);
std::vector<ScoreConfig> methods_from(const Config& cfg);
std::vector<std::size_t> model_dims_from(const Config& cfg, std::size_t input_dim,
                                         std::size_t classes);

// Benchmark data or CSV-backed data (data.kind = atypical | csv), resolved
// per run seed.
AtypicalBenchmark load_benchmark(const Config& cfg, std::uint64_t run_seed);

// Seeds list ("seeds" key, default single seed 1).
std::vector<std::uint64_t> seeds_from(const Config& cfg);

// Runs fn(seed) for every seed, in parallel up to the UMOOD_THREADS cap
// (default 1). Each seed writes only inside its own subdirectory, so the
// outputs are byte-identical regardless of the thread count.
void for_each_seed(const std::vector<std::uint64_t>& seeds,
                   const std::function<void(std::uint64_t)>& fn);

// Writes or verifies <out>/config.lock; a resumed directory with a different
// config hash is rejected.
void lock_config(const Config& cfg, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Commands (the CLI maps one verb onto each). All are deterministic given
// (config, seed): reruns produce byte-identical CSV and SVG outputs.
// ---------------------------------------------------------------------------

// Train the baseline classifier per seed; writes run.csv, metrics.csv,
// final.ckpt (and epoch_<e>.ckpt when train.save_every > 0).
void cmd_train(const Config& cfg, const std::filesystem::path& out_dir);

// Fig-1a style experiment: train on the atypical benchmark, evaluate every
// configured score each epoch, emit per-epoch CSV, an FPR95-vs-epoch SVG and
// a best/final summary (plus planted-atypical diagnostics).
void cmd_phenomenon(const Config& cfg, const std::filesystem::path& out_dir);

// Mask-ratio probe sweep over probe.grid; writes probe.csv per seed.
void cmd_probe(const Config& cfg, const std::filesystem::path& ckpt_path,
               const std::filesystem::path& out_dir);

// Estimate the forgetting constraint at um.delta; writes estimate.csv and the
// probe mask (mask.umm).
void cmd_estimate(const Config& cfg, const std::filesystem::path& ckpt_path,
                  const std::filesystem::path& out_dir);

// estimate_constraint followed by UM fine-tuning; evaluates scores before and
// after, writes run.csv, metrics.csv, deltas.csv and um.ckpt.
void cmd_um(const Config& cfg, const std::filesystem::path& ckpt_path,
            const std::filesystem::path& out_dir);

// estimate_constraint followed by UMAP mask learning over the frozen model;
// the checkpoint file is never modified. Writes run.csv, metrics.csv,
// deltas.csv and umap_mask.umm.
void cmd_umap(const Config& cfg, const std::filesystem::path& ckpt_path,
              const std::filesystem::path& out_dir);

// Outlier-exposure fine-tuning from the checkpoint; writes run.csv,
// metrics.csv, deltas.csv and oe.ckpt.
void cmd_oe(const Config& cfg, const std::filesystem::path& ckpt_path,
            const std::filesystem::path& out_dir);

// Raw per-sample scores for the configured methods; writes scores.csv.
void cmd_score(const Config& cfg, const std::filesystem::path& ckpt_path,
               const std::filesystem::path& out_dir);

// One metrics row per method for the checkpoint; writes metrics.csv.
void cmd_eval(const Config& cfg, const std::filesystem::path& ckpt_path,
              const std::filesystem::path& out_dir);

// Typical/atypical ablation: split by CE loss under the given (mid-training)
// checkpoint, fine-tune one copy per split identically, report both; writes
// ablation.csv.
void cmd_ablation(const Config& cfg, const std::filesystem::path& ckpt_path,
                  const std::filesystem::path& out_dir);

// Margin-budget sweep of the Gaussian-mixture simulation; writes theory.csv,
// theory.svg and spearman.txt.
void cmd_theory(const Config& cfg, const std::filesystem::path& out_dir);

// Re-render SVG curves and a best/final summary table from the run.csv files
// under run_dir; errors when none exist.
void cmd_report(const std::filesystem::path& run_dir);

}  // namespace umood
