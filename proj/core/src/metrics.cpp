#include "umood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "umood/util.hpp"

namespace umood {

namespace {

void check_scores(const ScoredSet& s, const char* op) {
  if (s.id_scores.empty() || s.ood_scores.empty()) {
    throw ArgumentError(std::string(op) + ": both score arrays must be non-empty");
  }
  for (double v : s.id_scores) {
    if (!std::isfinite(v)) {
      throw ArgumentError(std::string(op) + ": non-finite ID score");
    }
  }
  for (double v : s.ood_scores) {
    if (!std::isfinite(v)) {
      throw ArgumentError(std::string(op) + ": non-finite OOD score");
    }
  }
}

}  // namespace

double fpr_at_tpr(const ScoredSet& scores, double tpr_target) {
  check_scores(scores, "fpr_at_tpr");
  if (!(tpr_target > 0.0) || tpr_target > 1.0) {
    throw ArgumentError("fpr_at_tpr: target must lie in (0, 1]");
  }
  const std::size_t n_id = scores.id_scores.size();
  // Smallest k with k/n_id >= target; the 1e-9 guard absorbs upward rounding
  // of the product (e.g. 0.9 * 10).
  std::size_t k = static_cast<std::size_t>(
      std::ceil(tpr_target * static_cast<double>(n_id) - 1e-9));
  k = std::max<std::size_t>(1, std::min(k, n_id));

  // lambda = k-th largest ID score: the largest threshold with TPR >= target.
  std::vector<double> sorted(scores.id_scores);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end(), std::greater<double>());
  const double lambda = sorted[k - 1];

  std::size_t fp = 0;
  for (double v : scores.ood_scores) {
    if (v >= lambda) {
      ++fp;
    }
  }
  return static_cast<double>(fp) / static_cast<double>(scores.ood_scores.size());
}

double auroc(const ScoredSet& scores) {
  check_scores(scores, "auroc");
  const std::size_t n_id = scores.id_scores.size();
  const std::size_t n_ood = scores.ood_scores.size();

  struct Entry {
    double score;
    bool is_id;
  };
  std::vector<Entry> all;
  all.reserve(n_id + n_ood);
  for (double v : scores.id_scores) {
    all.push_back({v, true});
  }
  for (double v : scores.ood_scores) {
    all.push_back({v, false});
  }
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // rank sum of ID with average ranks over tie groups
  double rank_sum_id = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].is_id) {
        rank_sum_id += avg_rank;
      }
    }
    i = j;
  }
  const double n1 = static_cast<double>(n_id);
  return (rank_sum_id - n1 * (n1 + 1.0) / 2.0) / (n1 * static_cast<double>(n_ood));
}

double aupr(const ScoredSet& scores) {
  check_scores(scores, "aupr");
  struct Entry {
    double score;
    bool is_id;
  };
  std::vector<Entry> all;
  all.reserve(scores.id_scores.size() + scores.ood_scores.size());
  for (double v : scores.id_scores) {
    all.push_back({v, true});
  }
  for (double v : scores.ood_scores) {
    all.push_back({v, false});
  }
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score > b.score; });

  const double n_id = static_cast<double>(scores.id_scores.size());
  double tp = 0.0;
  double fp = 0.0;
  double prev_recall = 0.0;
  double ap = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) {
      ++j;
    }
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].is_id) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
    }
    const double recall = tp / n_id;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double id_acc(const Classifier& model, const LabeledSet& test, const LayerMask* mask) {
  if (test.size() == 0) {
    throw ArgumentError("id_acc: empty test set");
  }
  const Matrix logits = forward_batch(model, test.features, mask);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < test.size(); ++s) {
    const auto row = logits.row(s);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[arg]) {
        arg = c;
      }
    }
    if (static_cast<int>(arg) == test.labels[s]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("write_metrics_csv: cannot open " + path.string());
  }
  out << "run_id,epoch,method,fpr95,auroc,aupr,id_acc\n";
  for (const MetricsRow& r : rows) {
    out << r.run_id << ',' << r.epoch << ',' << r.method << ',' << format_double(r.fpr95) << ','
        << format_double(r.auroc) << ',' << format_double(r.aupr) << ','
        << format_double(r.id_acc) << '\n';
  }
}

}  // namespace umood
