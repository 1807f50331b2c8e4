#pragma once

// Brute-force reference implementations used only by tests. Each one takes an
// independent computational route from the library code it checks.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "umood/metrics.hpp"

namespace oracles {

// AUROC by the quadratic pairwise definition.
inline double auroc_pairwise(const umood::ScoredSet& s) {
  double wins = 0.0;
  for (double i : s.id_scores) {
    for (double o : s.ood_scores) {
      if (i > o) {
        wins += 1.0;
      } else if (i == o) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(s.id_scores.size()) *
                 static_cast<double>(s.ood_scores.size()));
}

// FPR@TPR by exhaustive threshold sweep over every candidate lambda.
inline double fpr_sweep(const umood::ScoredSet& s, double target) {
  const double n_id = static_cast<double>(s.id_scores.size());
  std::set<double, std::greater<double>> candidates(s.id_scores.begin(), s.id_scores.end());
  double best_lambda = 0.0;
  bool found = false;
  for (double lambda : candidates) {  // descending: first hit is the largest
    std::size_t tp = 0;
    for (double v : s.id_scores) {
      if (v >= lambda) {
        ++tp;
      }
    }
    if (static_cast<double>(tp) / n_id >= target - 1e-12) {
      best_lambda = lambda;
      found = true;
      break;
    }
  }
  if (!found) {
    best_lambda = *std::min_element(s.id_scores.begin(), s.id_scores.end());
  }
  std::size_t fp = 0;
  for (double v : s.ood_scores) {
    if (v >= best_lambda) {
      ++fp;
    }
  }
  return static_cast<double>(fp) / static_cast<double>(s.ood_scores.size());
}

// Average precision via the explicit PR staircase over unique thresholds.
inline double aupr_staircase(const umood::ScoredSet& s) {
  std::set<double, std::greater<double>> thresholds;
  thresholds.insert(s.id_scores.begin(), s.id_scores.end());
  thresholds.insert(s.ood_scores.begin(), s.ood_scores.end());
  const double n_id = static_cast<double>(s.id_scores.size());
  double prev_recall = 0.0;
  double ap = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (double v : s.id_scores) {
      if (v >= t) {
        ++tp;
      }
    }
    for (double v : s.ood_scores) {
      if (v >= t) {
        ++fp;
      }
    }
    const double recall = static_cast<double>(tp) / n_id;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// Relative error between two vectors: ||a - b|| / max(||a||, ||b||, floor).
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b,
                      double floor = 1e-12) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace oracles
