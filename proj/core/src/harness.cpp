#include "umood/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "umood/svg.hpp"
#include "umood/util.hpp"
#include "umood/version.hpp"

namespace umood {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config resolution
// ---------------------------------------------------------------------------

AtypicalBenchmarkSpec benchmark_spec_from(const Config& cfg, std::uint64_t run_seed) {
  AtypicalBenchmarkSpec spec;
  spec.dims = static_cast<std::size_t>(cfg.get_int("data.d", 2));
  spec.class_count = static_cast<std::size_t>(cfg.get_int("data.k", 3));
  spec.r_id = cfg.get_double("data.r_id", 4.0);
  spec.sigma_id = cfg.get_double("data.sigma_id", 0.5);
  spec.per_class = static_cast<std::size_t>(cfg.get_int("data.n", 500));
  spec.atypical_fraction = cfg.get_double("data.rho", 0.05);
  spec.r_atypical = cfg.get_double("data.r_atyp", 7.0);
  spec.sigma_atypical = cfg.get_double("data.sigma_atyp", 0.3);
  spec.r_ood = cfg.get_double("data.r_ood", 10.0);
  spec.ood_count = static_cast<std::size_t>(cfg.get_int("data.ood_n", 1500));
  spec.aux_count = static_cast<std::size_t>(cfg.get_int("data.aux_n", 1500));
  spec.test_per_class = static_cast<std::size_t>(cfg.get_int("data.test_n", 500));
  const std::uint64_t data_seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", 1));
  spec.seed = RandomStream(data_seed).child(run_seed).seed();
  return spec;
}

AtypicalBenchmark load_benchmark(const Config& cfg, std::uint64_t run_seed) {
  const std::string kind = cfg.get_string("data.kind", "atypical");
  if (kind == "atypical") {
    return gen_atypical_benchmark(benchmark_spec_from(cfg, run_seed));
  }
  if (kind == "csv") {
    AtypicalBenchmark bench;
    bench.id_train = load_csv(cfg.get_string("data.id_train", ""));
    bench.id_train.tag = LabeledSet::Tag::kIdTrain;
    bench.id_test = load_csv(cfg.get_string("data.id_test", ""));
    bench.id_test.tag = LabeledSet::Tag::kIdTest;
    bench.ood_test = load_csv(cfg.get_string("data.ood_test", ""));
    bench.ood_test.tag = LabeledSet::Tag::kOodTest;
    const std::string aux = cfg.get_string("data.aux", "");
    if (!aux.empty()) {
      bench.aux = load_csv(aux);
      bench.aux.tag = LabeledSet::Tag::kAux;
    }
    return bench;
  }
  throw ArgumentError("data.kind must be 'atypical' or 'csv', got '" + kind + "'");
}

TrainConfig train_config_from(const Config& cfg, std::uint64_t run_seed) {
  TrainConfig t;
  t.lr = cfg.get_double("train.lr", 0.1);
  t.momentum = cfg.get_double("train.momentum", 0.9);
  t.weight_decay = cfg.get_double("train.weight_decay", 1e-4);
  t.epochs = static_cast<std::size_t>(cfg.get_int("train.epochs", 100));
  t.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch", 256));
  const std::string sched = cfg.get_string("train.schedule", "cosine");
  if (sched == "cosine") {
    t.schedule = Schedule::kCosine;
  } else if (sched == "constant") {
    t.schedule = Schedule::kConstant;
  } else if (sched == "linear3" || sched == "linear-3-phase") {
    t.schedule = Schedule::kLinear3Phase;
  } else if (sched == "multistep") {
    t.schedule = Schedule::kMultistep;
  } else {
    throw ArgumentError("train.schedule: unknown schedule '" + sched + "'");
  }
  t.seed = run_seed;
  return t;
}

std::vector<ScoreConfig> methods_from(const Config& cfg) {
  const std::vector<std::string> names =
      cfg.get_string_list("score.methods", {"msp", "energy"});
  std::vector<ScoreConfig> methods;
  for (const std::string& name : names) {
    ScoreConfig sc;
    switch (parse_score_method(name)) {
      case ScoreMethod::kMsp:
        sc = ScoreConfig::msp();
        break;
      case ScoreMethod::kOdin:
        sc = ScoreConfig::odin();
        sc.temperature = cfg.get_double("score.odin_t", sc.temperature);
        sc.epsilon = cfg.get_double("score.odin_eps", sc.epsilon);
        break;
      case ScoreMethod::kEnergy:
        sc = ScoreConfig::energy();
        sc.temperature = cfg.get_double("score.energy_t", sc.temperature);
        break;
      case ScoreMethod::kMahalanobis:
        sc = ScoreConfig::mahalanobis();
        sc.ridge = cfg.get_double("score.ridge", sc.ridge);
        if (cfg.get_string("score.feature", "penultimate") == "logits") {
          sc.feature_layer = std::numeric_limits<std::size_t>::max();  // resolved at fit
        }
        break;
    }
    methods.push_back(sc);
  }
  return methods;
}

std::vector<std::size_t> model_dims_from(const Config& cfg, std::size_t input_dim,
                                         std::size_t classes) {
  std::vector<std::size_t> dims{input_dim};
  for (double h : cfg.get_double_list("model.hidden", {64.0, 64.0})) {
    if (h < 1.0) {
      throw ArgumentError("model.hidden: layer width must be >= 1");
    }
    dims.push_back(static_cast<std::size_t>(h));
  }
  dims.push_back(classes);
  return dims;
}

std::vector<std::uint64_t> seeds_from(const Config& cfg) {
  return cfg.get_seed_list("seeds", {1});
}

void for_each_seed(const std::vector<std::uint64_t>& seeds,
                   const std::function<void(std::uint64_t)>& fn) {
  std::size_t threads = 1;
  if (const char* env = std::getenv("UMOOD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 1) {
      threads = static_cast<std::size_t>(v);
    }
  }
  threads = std::min(threads, seeds.size());
  if (threads <= 1) {
    for (std::uint64_t s : seeds) {
      fn(s);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= seeds.size()) {
          return;
        }
        try {
          fn(seeds[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) {
            first_error = std::current_exception();
          }
        }
      }
    });
  }
  for (std::thread& t : pool) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

void lock_config(const Config& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const fs::path lock = out_dir / "config.lock";
  const std::string hash = std::to_string(cfg.hash());
  if (fs::exists(lock)) {
    std::ifstream in(lock);
    std::string stored;
    std::getline(in, stored);
    if (stored != hash) {
      throw FormatError("config hash mismatch in " + out_dir.string() +
                        " (directory was produced by a different config)");
    }
    return;
  }
  write_text_file(lock, hash + "\n");
}

// ---------------------------------------------------------------------------
// Shared per-run machinery
// ---------------------------------------------------------------------------

namespace {

struct RunParts {
  AtypicalBenchmark bench;
  std::vector<ScoreConfig> methods;
  std::vector<std::string> method_names;
  EvalSpec spec;  // points into bench
  std::size_t eval_every = 1;
};

RunParts make_parts(const Config& cfg, std::uint64_t seed) {
  RunParts parts;
  parts.bench = load_benchmark(cfg, seed);
  parts.methods = methods_from(cfg);
  for (const ScoreConfig& m : parts.methods) {
    parts.method_names.push_back(score_method_name(m.method));
  }
  parts.spec.id_test = &parts.bench.id_test;
  parts.spec.ood_test = &parts.bench.ood_test;
  parts.spec.id_train = &parts.bench.id_train;
  parts.spec.methods = parts.methods;
  parts.eval_every = static_cast<std::size_t>(cfg.get_int("eval.every", 1));
  if (parts.eval_every == 0) {
    throw ArgumentError("eval.every must be >= 1");
  }
  return parts;
}

bool should_eval(std::size_t epoch, std::size_t every, std::size_t total) {
  return epoch % every == 0 || epoch + 1 == total;
}

void fill_row(const EvalResult& ev, RunRow& row) {
  row.evaluated = true;
  row.id_acc = ev.id_acc;
  row.fpr95.clear();
  row.auroc.clear();
  row.aupr.clear();
  for (const MethodMetrics& m : ev.per_method) {
    row.fpr95.push_back(m.fpr95);
    row.auroc.push_back(m.auroc);
    row.aupr.push_back(m.aupr);
  }
}

std::vector<MetricsRow> metrics_rows_from(const RunRecord& rec, const std::string& run_id) {
  std::vector<MetricsRow> rows;
  for (const RunRow& r : rec.rows) {
    if (!r.evaluated || r.fpr95.empty()) {
      continue;
    }
    for (std::size_t m = 0; m < rec.methods.size(); ++m) {
      MetricsRow row;
      row.run_id = run_id;
      row.epoch = r.epoch;
      row.method = rec.methods[m];
      row.fpr95 = r.fpr95[m];
      row.auroc = r.auroc[m];
      row.aupr = r.aupr[m];
      row.id_acc = r.id_acc;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_deltas_csv(const EvalResult& before, const EvalResult& after, double c_hat,
                      double delta, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("write_deltas_csv: cannot open " + path.string());
  }
  out << "# constraint=" << format_double(c_hat) << " delta=" << format_double(delta) << '\n';
  out << "method,fpr95_before,fpr95_after,auroc_before,auroc_after,aupr_before,aupr_after,"
         "id_acc_before,id_acc_after\n";
  for (std::size_t m = 0; m < before.per_method.size(); ++m) {
    const MethodMetrics& b = before.per_method[m];
    const MethodMetrics& a = after.per_method[m];
    out << b.method << ',' << format_double(b.fpr95) << ',' << format_double(a.fpr95) << ','
        << format_double(b.auroc) << ',' << format_double(a.auroc) << ','
        << format_double(b.aupr) << ',' << format_double(a.aupr) << ','
        << format_double(before.id_acc) << ',' << format_double(after.id_acc) << '\n';
  }
}

Classifier load_model(const fs::path& ckpt_path) {
  return load_checkpoint(ckpt_path).to_classifier();
}

std::uint64_t mask_seed_for(std::uint64_t run_seed) {
  return RandomStream(run_seed).child(11).seed();
}

Classifier init_model(const Config& cfg, const AtypicalBenchmark& bench, std::uint64_t seed) {
  const std::size_t classes = static_cast<std::size_t>(
      std::max(2, bench.id_train.class_count));
  RandomStream init_rng = RandomStream(seed).child(10);
  return Classifier::random_init(model_dims_from(cfg, bench.id_train.dim(), classes), init_rng);
}

// FPR95-vs-epoch chart across evaluated epochs
std::string fpr_chart(const RunRecord& rec, const std::string& title) {
  std::vector<Series> series;
  for (std::size_t m = 0; m < rec.methods.size(); ++m) {
    Series s;
    s.label = rec.methods[m];
    for (const RunRow& r : rec.rows) {
      if (m < r.fpr95.size() && std::isfinite(r.fpr95[m])) {
        s.xs.push_back(static_cast<double>(r.epoch));
        s.ys.push_back(r.fpr95[m]);
      }
    }
    series.push_back(std::move(s));
  }
  return render_line_chart(title, "epoch", "FPR95", series);
}

struct BestFinal {
  std::size_t best_epoch = 0;
  double best = 0.0;
  double final_value = 0.0;
};

BestFinal best_final_fpr(const RunRecord& rec, std::size_t method_index) {
  BestFinal bf;
  bool any = false;
  for (const RunRow& r : rec.rows) {
    if (method_index >= r.fpr95.size() || !std::isfinite(r.fpr95[method_index])) {
      continue;
    }
    const double v = r.fpr95[method_index];
    if (!any || v < bf.best) {
      bf.best = v;
      bf.best_epoch = r.epoch;
    }
    bf.final_value = v;
    any = true;
  }
  if (!any) {
    throw ArgumentError("best_final_fpr: record holds no evaluated epochs");
  }
  return bf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_train(const Config& cfg, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  const std::vector<std::uint64_t> seeds = seeds_from(cfg);
  for_each_seed(seeds, [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    RunParts parts = make_parts(cfg, seed);
    Classifier model = init_model(cfg, parts.bench, seed);
    const TrainConfig tcfg = train_config_from(cfg, seed);

    EpochHook hook = [&](std::size_t epoch, const Classifier& m, RunRow& row) {
      if (should_eval(epoch, parts.eval_every, tcfg.epochs)) {
        fill_row(evaluate(m, parts.spec), row);
      }
    };
    TrainResult result = train(model, parts.bench.id_train, tcfg, hook);
    result.record.methods = parts.method_names;
    result.record.config_hash = cfg.hash();
    result.record.save(dir / "run.csv");

    const std::vector<MetricsRow> rows =
        metrics_rows_from(result.record, "train-seed" + std::to_string(seed));
    write_metrics_csv(rows, dir / "metrics.csv");

    Checkpoint final_ckpt = result.per_epoch.back();
    final_ckpt.config_hash = cfg.hash();
    save_checkpoint(final_ckpt, dir / "final.ckpt");
    const std::size_t save_every = static_cast<std::size_t>(cfg.get_int("train.save_every", 0));
    if (save_every > 0) {
      for (const Checkpoint& c : result.per_epoch) {
        if (c.epoch % save_every == 0) {
          save_checkpoint(c, dir / ("epoch_" + std::to_string(c.epoch) + ".ckpt"));
        }
      }
    }
    if (cfg.get_bool("data.save", false)) {
      save_csv(parts.bench.id_train, dir / "id_train.csv");
      save_csv(parts.bench.id_test, dir / "id_test.csv");
      save_csv(parts.bench.ood_test, dir / "ood_test.csv");
      save_csv(parts.bench.aux, dir / "aux.csv");
    }
  });
}

void cmd_phenomenon(const Config& cfg, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  const std::vector<std::uint64_t> seeds = seeds_from(cfg);

  struct SeedSummary {
    std::uint64_t seed = 0;
    std::vector<std::string> methods;
    std::vector<BestFinal> per_method;
    double planted_recall = 0.0;
    double planted_mean_ce = 0.0;
    double clean_mean_ce = 0.0;
    bool have_planted = false;
  };
  std::vector<SeedSummary> summaries(seeds.size());
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    // index-addressed so the parallel loop stays deterministic
    summaries[si].seed = seeds[si];
  }

  for_each_seed(seeds, [&](std::uint64_t seed) {
    const std::size_t si = static_cast<std::size_t>(
        std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    RunParts parts = make_parts(cfg, seed);
    Classifier model = init_model(cfg, parts.bench, seed);
    const TrainConfig tcfg = train_config_from(cfg, seed);

    EpochHook hook = [&](std::size_t epoch, const Classifier& m, RunRow& row) {
      if (should_eval(epoch, parts.eval_every, tcfg.epochs)) {
        fill_row(evaluate(m, parts.spec), row);
      }
    };
    TrainResult result = train(model, parts.bench.id_train, tcfg, hook);
    result.record.methods = parts.method_names;
    result.record.config_hash = cfg.hash();
    result.record.save(dir / "run.csv");
    write_metrics_csv(metrics_rows_from(result.record, "phenomenon-seed" + std::to_string(seed)),
                      dir / "metrics.csv");
    write_text_file(dir / "fpr95.svg",
                    fpr_chart(result.record, "FPR95 vs epoch (seed " + std::to_string(seed) + ")"));

    Checkpoint final_ckpt = result.per_epoch.back();
    final_ckpt.config_hash = cfg.hash();
    save_checkpoint(final_ckpt, dir / "final.ckpt");
    const std::size_t save_every = static_cast<std::size_t>(cfg.get_int("train.save_every", 0));
    if (save_every > 0) {
      for (const Checkpoint& c : result.per_epoch) {
        if (c.epoch % save_every == 0) {
          save_checkpoint(c, dir / ("epoch_" + std::to_string(c.epoch) + ".ckpt"));
        }
      }
    }

    SeedSummary& sum = summaries[si];
    sum.methods = parts.method_names;
    for (std::size_t m = 0; m < parts.method_names.size(); ++m) {
      sum.per_method.push_back(best_final_fpr(result.record, m));
    }

    // planted-atypical diagnostics at the best epoch of the leading method
    // (energy when configured, else the first)
    if (!parts.bench.planted.empty()) {
      std::size_t lead = 0;
      for (std::size_t m = 0; m < sum.methods.size(); ++m) {
        if (sum.methods[m] == "energy") {
          lead = m;
          break;
        }
      }
      const std::size_t best_epoch = sum.per_method[lead].best_epoch;
      const Classifier best_model = result.per_epoch[best_epoch].to_classifier();
      const std::size_t selection = parts.bench.planted.size();
      if (selection <= parts.bench.id_train.size() / 2) {
        const AtypicalSplit split = atypical_split(best_model, parts.bench.id_train, selection);
        std::size_t hits = 0;
        for (std::size_t idx : split.atypical_indices) {
          if (std::binary_search(parts.bench.planted.begin(), parts.bench.planted.end(), idx)) {
            ++hits;
          }
        }
        sum.planted_recall = static_cast<double>(hits) / static_cast<double>(selection);
        // mean CE of planted vs clean training points under the best model
        const Matrix logits = forward_batch(best_model, parts.bench.id_train.features);
        double planted_ce = 0.0, clean_ce = 0.0;
        std::size_t clean_n = 0;
        std::size_t p = 0;
        for (std::size_t s = 0; s < parts.bench.id_train.size(); ++s) {
          const auto row = logits.row(s);
          const double ce =
              logsumexp(row) - row[static_cast<std::size_t>(parts.bench.id_train.labels[s])];
          if (p < parts.bench.planted.size() && parts.bench.planted[p] == s) {
            planted_ce += ce;
            ++p;
          } else {
            clean_ce += ce;
            ++clean_n;
          }
        }
        sum.planted_mean_ce = planted_ce / static_cast<double>(parts.bench.planted.size());
        sum.clean_mean_ce = clean_ce / static_cast<double>(clean_n);
        sum.have_planted = true;
      }
    }

    std::string text = "phenomenon seed " + std::to_string(seed) + "\n";
    for (std::size_t m = 0; m < sum.methods.size(); ++m) {
      text += sum.methods[m] + ": best_epoch=" + std::to_string(sum.per_method[m].best_epoch) +
              " best_fpr95=" + format_double(sum.per_method[m].best) +
              " final_fpr95=" + format_double(sum.per_method[m].final_value) + "\n";
    }
    if (sum.have_planted) {
      text += "planted_recall=" + format_double(sum.planted_recall) +
              " planted_mean_ce=" + format_double(sum.planted_mean_ce) +
              " clean_mean_ce=" + format_double(sum.clean_mean_ce) + "\n";
    }
    write_text_file(dir / "summary.txt", text);
  });

  std::ofstream out(out_dir / "phenomenon_summary.csv", std::ios::binary);
  if (!out) {
    throw FormatError("cmd_phenomenon: cannot open summary in " + out_dir.string());
  }
  out << "seed,method,best_epoch,best_fpr95,final_fpr95,planted_recall\n";
  for (const SeedSummary& sum : summaries) {
    for (std::size_t m = 0; m < sum.methods.size(); ++m) {
      out << sum.seed << ',' << sum.methods[m] << ',' << sum.per_method[m].best_epoch << ','
          << format_double(sum.per_method[m].best) << ','
          << format_double(sum.per_method[m].final_value) << ','
          << format_double(sum.planted_recall) << '\n';
    }
  }
}

void cmd_probe(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  const std::vector<double> grid = cfg.get_double_list(
      "probe.grid", {0.995, 0.99, 0.985, 0.98, 0.975, 0.97});
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier model = load_model(ckpt_path);
    RunParts parts = make_parts(cfg, seed);
    const std::vector<ProbeReport> reports =
        probe_sweep(model, grid, parts.bench.id_train, mask_seed_for(seed));
    write_probe_csv(reports, dir / "probe.csv");
  });
}

void cmd_estimate(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier model = load_model(ckpt_path);
    RunParts parts = make_parts(cfg, seed);
    const double delta = cfg.get_double("um.delta", 0.95);
    const LayerMask mask = gen_mask(model, delta, mask_seed_for(seed));
    const ForgettingConstraint fc = estimate_constraint(model, mask, parts.bench.id_train);
    save_mask(mask, dir / "mask.umm");
    std::ofstream out(dir / "estimate.csv", std::ios::binary);
    if (!out) {
      throw FormatError("cmd_estimate: cannot open output in " + dir.string());
    }
    out << "delta,c_hat,dataset_size,mask_seed\n";
    out << format_double(fc.delta) << ',' << format_double(fc.value) << ',' << fc.dataset_size
        << ',' << fc.seed << '\n';
  });
}

void cmd_um(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier base = load_model(ckpt_path);
    RunParts parts = make_parts(cfg, seed);

    const double delta = cfg.get_double("um.delta", 0.95);
    const LayerMask mask = gen_mask(base, delta, mask_seed_for(seed));
    const ForgettingConstraint fc = estimate_constraint(base, mask, parts.bench.id_train);

    UmConfig ucfg;
    ucfg.constraint = fc;
    ucfg.epochs = static_cast<std::size_t>(cfg.get_int("um.epochs", 20));
    ucfg.lr = cfg.get_double("um.lr", 0.01);
    ucfg.momentum = cfg.get_double("um.momentum", 0.0);
    ucfg.weight_decay = cfg.get_double("um.weight_decay", 0.0);
    ucfg.batch_size = static_cast<std::size_t>(cfg.get_int("um.batch", 256));
    ucfg.seed = seed;

    const EvalResult before = evaluate(base, parts.spec);
    Classifier model = base;
    EpochHook hook = [&](std::size_t epoch, const Classifier& m, RunRow& row) {
      if (should_eval(epoch, parts.eval_every, ucfg.epochs)) {
        fill_row(evaluate(m, parts.spec), row);
      }
    };
    TrainResult result = um_finetune(model, parts.bench.id_train, ucfg, hook);
    const EvalResult after = evaluate(model, parts.spec);

    result.record.methods = parts.method_names;
    result.record.config_hash = cfg.hash();
    result.record.save(dir / "run.csv");
    write_metrics_csv(metrics_rows_from(result.record, "um-seed" + std::to_string(seed)),
                      dir / "metrics.csv");
    write_deltas_csv(before, after, fc.value, fc.delta, dir / "deltas.csv");
    Checkpoint tuned = Checkpoint::from(model, ucfg.epochs - 1, seed, cfg.hash());
    save_checkpoint(tuned, dir / "um.ckpt");
  });
}

void cmd_umap(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier base = load_model(ckpt_path);
    const std::vector<double> params_before = base.flatten();
    RunParts parts = make_parts(cfg, seed);

    const double delta = cfg.get_double("umap.delta", cfg.get_double("um.delta", 0.95));
    const LayerMask probe_mask = gen_mask(base, delta, mask_seed_for(seed));
    const ForgettingConstraint fc = estimate_constraint(base, probe_mask, parts.bench.id_train);

    UmapConfig ucfg;
    ucfg.constraint = fc;
    ucfg.prune_fraction = cfg.get_double("umap.p", 0.5);
    ucfg.epochs = static_cast<std::size_t>(cfg.get_int("umap.epochs", 50));
    ucfg.lr = cfg.get_double("umap.lr", 0.1);
    ucfg.momentum = cfg.get_double("umap.momentum", 0.9);
    ucfg.weight_decay = cfg.get_double("umap.weight_decay", 0.0);
    ucfg.batch_size = static_cast<std::size_t>(cfg.get_int("umap.batch", 256));
    ucfg.seed = seed;

    const EvalResult before = evaluate(base, parts.spec);
    UmapEpochHook hook = [&](std::size_t epoch, const Classifier& m, const LayerMask& mk,
                             RunRow& row) {
      if (should_eval(epoch, parts.eval_every, ucfg.epochs)) {
        fill_row(evaluate(m, parts.spec, &mk), row);
      }
    };
    UmapResult result = umap_train(base, parts.bench.id_train, ucfg, hook);
    const EvalResult after = evaluate(base, parts.spec, &result.mask);

    result.record.methods = parts.method_names;
    result.record.config_hash = cfg.hash();
    result.record.save(dir / "run.csv");
    write_metrics_csv(metrics_rows_from(result.record, "umap-seed" + std::to_string(seed)),
                      dir / "metrics.csv");
    write_deltas_csv(before, after, fc.value, fc.delta, dir / "deltas.csv");
    save_mask(result.mask, dir / "umap_mask.umm");

    // frozen-weights contract: the model must be bitwise unchanged
    if (base.flatten() != params_before) {
      throw NumericError("cmd_umap: model parameters changed during mask learning");
    }
  });
}

void cmd_oe(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier base = load_model(ckpt_path);
    RunParts parts = make_parts(cfg, seed);
    if (parts.bench.aux.size() == 0) {
      throw ArgumentError("cmd_oe: benchmark provides no auxiliary outliers");
    }

    ExposureConfig expo;
    const std::string method = cfg.get_string("oe.method", "oe");
    if (method == "oe") {
      expo.method = ExposureMethod::kOe;
    } else if (method == "energy-bound") {
      expo.method = ExposureMethod::kEnergyBound;
    } else {
      throw ArgumentError("oe.method must be 'oe' or 'energy-bound'");
    }
    expo.lambda = cfg.get_double("oe.lambda", 0.5);
    expo.m_in = cfg.get_double("oe.m_in", -25.0);
    expo.m_out = cfg.get_double("oe.m_out", -7.0);
    expo.aux_batch_size = static_cast<std::size_t>(cfg.get_int("oe.aux_batch", 256));

    TrainConfig tcfg;
    tcfg.lr = cfg.get_double("oe.lr", 0.01);
    tcfg.momentum = cfg.get_double("oe.momentum", 0.9);
    tcfg.weight_decay = cfg.get_double("oe.weight_decay", 1e-4);
    tcfg.epochs = static_cast<std::size_t>(cfg.get_int("oe.epochs", 20));
    tcfg.batch_size = static_cast<std::size_t>(cfg.get_int("oe.batch", 256));
    tcfg.schedule = Schedule::kConstant;
    tcfg.seed = seed;

    const EvalResult before = evaluate(base, parts.spec);
    Classifier model = base;
    EpochHook hook = [&](std::size_t epoch, const Classifier& m, RunRow& row) {
      if (should_eval(epoch, parts.eval_every, tcfg.epochs)) {
        fill_row(evaluate(m, parts.spec), row);
      }
    };
    TrainResult result =
        finetune_with_outliers(model, parts.bench.id_train, parts.bench.aux, expo, tcfg, hook);
    const EvalResult after = evaluate(model, parts.spec);

    result.record.methods = parts.method_names;
    result.record.config_hash = cfg.hash();
    result.record.save(dir / "run.csv");
    write_metrics_csv(metrics_rows_from(result.record, "oe-seed" + std::to_string(seed)),
                      dir / "metrics.csv");
    write_deltas_csv(before, after, 0.0, 1.0, dir / "deltas.csv");
    save_checkpoint(Checkpoint::from(model, tcfg.epochs - 1, seed, cfg.hash()), dir / "oe.ckpt");
  });
}

void cmd_score(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier model = load_model(ckpt_path);
    RunParts parts = make_parts(cfg, seed);
    write_scores_csv(model, parts.spec, dir / "scores.csv");
  });
}

void cmd_eval(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier model = load_model(ckpt_path);
    RunParts parts = make_parts(cfg, seed);
    const EvalResult ev = evaluate(model, parts.spec);
    std::vector<MetricsRow> rows;
    for (const MethodMetrics& m : ev.per_method) {
      MetricsRow row;
      row.run_id = "eval-seed" + std::to_string(seed);
      row.epoch = 0;
      row.method = m.method;
      row.fpr95 = m.fpr95;
      row.auroc = m.auroc;
      row.aupr = m.aupr;
      row.id_acc = ev.id_acc;
      rows.push_back(std::move(row));
    }
    write_metrics_csv(rows, dir / "metrics.csv");
  });
}

void cmd_ablation(const Config& cfg, const fs::path& ckpt_path, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  for_each_seed(seeds_from(cfg), [&](std::uint64_t seed) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Classifier base = load_model(ckpt_path);
    RunParts parts = make_parts(cfg, seed);

    const std::size_t selection = static_cast<std::size_t>(cfg.get_int("ablation.selection", 50));
    TrainConfig tcfg;
    tcfg.lr = cfg.get_double("ablation.lr", 0.01);
    tcfg.momentum = cfg.get_double("ablation.momentum", 0.9);
    tcfg.weight_decay = cfg.get_double("ablation.weight_decay", 1e-4);
    tcfg.epochs = static_cast<std::size_t>(cfg.get_int("ablation.epochs", 20));
    tcfg.batch_size = static_cast<std::size_t>(cfg.get_int("ablation.batch", 64));
    tcfg.schedule = Schedule::kConstant;
    tcfg.seed = seed;

    std::ofstream out(dir / "ablation.csv", std::ios::binary);
    if (!out) {
      throw FormatError("cmd_ablation: cannot open output in " + dir.string());
    }
    out << "split,split_acc_at_ckpt,method,fpr95,auroc,aupr,id_acc\n";

    if (selection == 0) {
      // both fine-tunes degenerate to the baseline
      const EvalResult ev = evaluate(base, parts.spec);
      for (const char* split : {"typical", "atypical"}) {
        for (const MethodMetrics& m : ev.per_method) {
          out << split << ",nan," << m.method << ',' << format_double(m.fpr95) << ','
              << format_double(m.auroc) << ',' << format_double(m.aupr) << ','
              << format_double(ev.id_acc) << '\n';
        }
      }
      return;
    }

    const AtypicalSplit split = atypical_split(base, parts.bench.id_train, selection);
    auto run_side = [&](const LabeledSet& side, double side_acc, const char* name) {
      Classifier model = base;
      train(model, side, tcfg);
      const EvalResult ev = evaluate(model, parts.spec);
      for (const MethodMetrics& m : ev.per_method) {
        out << name << ',' << format_double(side_acc) << ',' << m.method << ','
            << format_double(m.fpr95) << ',' << format_double(m.auroc) << ','
            << format_double(m.aupr) << ',' << format_double(ev.id_acc) << '\n';
      }
    };
    run_side(split.typical, split.typical_accuracy, "typical");
    run_side(split.atypical, split.atypical_accuracy, "atypical");
  });
}

void cmd_theory(const Config& cfg, const fs::path& out_dir) {
  lock_config(cfg, out_dir);
  GmmTheorySpec spec;
  spec.dims = static_cast<std::size_t>(cfg.get_int("theory.d", 10));
  spec.signal = cfg.get_double("theory.signal", 3.0);
  spec.sigma = cfg.get_double("theory.sigma", 1.0);
  spec.n1 = static_cast<std::size_t>(cfg.get_int("theory.n1", 50));
  spec.n2 = static_cast<std::size_t>(cfg.get_int("theory.n2", 50));
  spec.trials = static_cast<std::size_t>(cfg.get_int("theory.trials", 200));
  spec.mc_samples = static_cast<std::size_t>(cfg.get_int("theory.mc", 20000));
  spec.seed = static_cast<std::uint64_t>(cfg.get_int("theory.seed", 1));
  const std::vector<double> grid =
      cfg.get_double_list("theory.grid", {15.2, 15.8, 16.4, 17.0, 18.0, 1e18});

  const std::vector<MarginSweepRow> rows = sweep_margin(spec, grid);
  write_margin_sweep_csv(rows, out_dir / "theory.csv");

  // spearman over the whole grid (monotone map friendly; inf budgets rank last)
  std::vector<double> bs, fprs, cosines;
  for (const MarginSweepRow& r : rows) {
    bs.push_back(r.budget);
    fprs.push_back(r.mean_fpr);
    cosines.push_back(r.mean_cosine);
  }
  std::string sp_text;
  if (rows.size() >= 2) {
    sp_text += "spearman_b_fpr=" + format_double(spearman(bs, fprs)) + "\n";
    sp_text += "spearman_b_cosine=" + format_double(spearman(bs, cosines)) + "\n";
  } else {
    sp_text = "spearman undefined for a single-point grid\n";
  }
  write_text_file(out_dir / "spearman.txt", sp_text);

  // chart over finite budgets
  Series fpr_series{"mean FPR", {}, {}};
  for (const MarginSweepRow& r : rows) {
    if (std::isfinite(r.budget)) {
      fpr_series.xs.push_back(r.budget);
      fpr_series.ys.push_back(r.mean_fpr);
    }
  }
  std::vector<Series> series{fpr_series};
  write_text_file(out_dir / "theory.svg",
                  render_line_chart("margin budget vs Monte-Carlo FPR", "b", "FPR", series));
}

void cmd_report(const fs::path& run_dir) {
  std::vector<fs::path> records;
  if (fs::exists(run_dir / "run.csv")) {
    records.push_back(run_dir / "run.csv");
  }
  if (fs::is_directory(run_dir)) {
    std::vector<fs::path> subdirs;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "run.csv")) {
        subdirs.push_back(entry.path() / "run.csv");
      }
    }
    std::sort(subdirs.begin(), subdirs.end());
    records.insert(records.end(), subdirs.begin(), subdirs.end());
  }
  if (records.empty()) {
    throw FormatError("cmd_report: no records under " + run_dir.string());
  }

  const fs::path report_dir = run_dir / "report";
  fs::create_directories(report_dir);

  std::string summary = "record,method,best_epoch,best_fpr95,final_fpr95\n";
  std::map<std::string, std::vector<std::pair<double, double>>> by_method;  // best, final
  for (const fs::path& rec_path : records) {
    const RunRecord rec = load_run_csv(rec_path);
    const std::string name = rec_path.parent_path().filename().string();
    write_text_file(report_dir / (name + "_fpr95.svg"), fpr_chart(rec, "FPR95 vs epoch (" + name + ")"));

    Series loss{"train_loss", {}, {}};
    Series obj{"objective", {}, {}};
    for (const RunRow& r : rec.rows) {
      loss.xs.push_back(static_cast<double>(r.epoch));
      loss.ys.push_back(r.train_loss);
      obj.xs.push_back(static_cast<double>(r.epoch));
      obj.ys.push_back(r.objective);
    }
    std::vector<Series> loss_series{loss, obj};
    write_text_file(report_dir / (name + "_loss.svg"),
                    render_line_chart("loss vs epoch (" + name + ")", "epoch", "loss", loss_series));

    for (std::size_t m = 0; m < rec.methods.size(); ++m) {
      const BestFinal bf = best_final_fpr(rec, m);
      summary += name + "," + rec.methods[m] + "," + std::to_string(bf.best_epoch) + "," +
                 format_double(bf.best) + "," + format_double(bf.final_value) + "\n";
      by_method[rec.methods[m]].push_back({bf.best, bf.final_value});
    }
  }
  summary += "\nmethod,mean_best_fpr95,mean_final_fpr95,records\n";
  for (const auto& [method, vals] : by_method) {
    double best_sum = 0.0, final_sum = 0.0;
    for (const auto& [b, f] : vals) {
      best_sum += b;
      final_sum += f;
    }
    const double n = static_cast<double>(vals.size());
    summary += method + "," + format_double(best_sum / n) + "," + format_double(final_sum / n) +
               "," + std::to_string(vals.size()) + "\n";
  }
  write_text_file(report_dir / "summary.txt", summary);
}

}  // namespace umood
