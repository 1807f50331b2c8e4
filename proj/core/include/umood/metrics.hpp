#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "umood/data.hpp"
#include "umood/nn.hpp"

namespace umood {

// ID/OOD score arrays, both oriented larger => ID. ID is the positive class.
struct ScoredSet {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

// FPR at the largest threshold lambda whose TPR (fraction of idScores >= lambda)
// still reaches tpr_target; no interpolation, finite-sample step functions.
// The returned value is the fraction of oodScores >= lambda.
double fpr_at_tpr(const ScoredSet& scores, double tpr_target);

// (#{id > ood} + 0.5 #ties) / (n_id * n_ood), via average ranks (O(n log n)).
double auroc(const ScoredSet& scores);

// Step-wise average precision with ID positive: descending unique-threshold
// sweep, ties grouped, AP = sum_k (R_k - R_{k-1}) P_k.
double aupr(const ScoredSet& scores);

// Fraction of samples with argmax logits == label; argmax ties break toward
// the lowest class index.
double id_acc(const Classifier& model, const LabeledSet& test, const LayerMask* mask = nullptr);

// One long-format row per (run, epoch, method).
struct MetricsRow {
  std::string run_id;
  std::size_t epoch = 0;
  std::string method;
  double fpr95 = 0.0;
  double auroc = 0.0;
  double aupr = 0.0;
  double id_acc = 0.0;
};

// CSV "run_id,epoch,method,fpr95,auroc,aupr,id_acc".
void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);

}  // namespace umood
