#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace umood {

// One per-epoch row of an experiment trajectory. The metric vectors are
// parallel to RunRecord::methods; empty when no evaluation ran that epoch.
struct RunRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double objective = 0.0;  // forgetting/exposure objective; == train_loss for plain training
  double train_acc = 0.0;
  bool evaluated = false;  // id_acc and the metric columns hold nan until set
  double id_acc = 0.0;
  std::vector<double> fpr95;
  std::vector<double> auroc;
  std::vector<double> aupr;
};

// Append-only, schema-versioned trajectory record persisted as CSV.
struct RunRecord {
  static constexpr const char* kSchema = "umood-run-v1";

  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string code_version;
  std::string rng_algorithm;
  std::vector<std::string> methods;  // score-method names in column order
  std::vector<RunRow> rows;

  void append(RunRow row) { rows.push_back(std::move(row)); }

  // CSV layout: provenance header comments, one column block per method
  // (<method>_fpr95, <method>_auroc, <method>_aupr). All floats with 17
  // significant digits; scores are oriented larger => ID throughout.
  void write_csv(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
};

RunRecord load_run_csv(const std::filesystem::path& path);

}  // namespace umood
