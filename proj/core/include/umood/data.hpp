#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "umood/numerics.hpp"

namespace umood {

class Classifier;

// ---------------------------------------------------------------------------
// LabeledSet: a batch of samples (n x d features) with integer labels.
// OOD / auxiliary sets carry the sentinel label -1.
// ---------------------------------------------------------------------------
struct LabeledSet {
  enum class Tag { kIdTrain, kIdTest, kOodTest, kAux, kAtypicalMarked };

  Matrix features;          // n x d
  std::vector<int> labels;  // in [0, C) or -1
  int class_count = 0;
  Tag tag = Tag::kIdTrain;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  // Row subset in the given index order.
  LabeledSet subset(const std::vector<std::size_t>& indices) const;
};

// ---------------------------------------------------------------------------
// Synthetic benchmark generation
// ---------------------------------------------------------------------------

// Seeded draws from per-class Gaussians N(mean_k, sigma^2 I).
LabeledSet gen_gmm(const std::vector<std::vector<double>>& means, double sigma,
                   const std::vector<std::size_t>& counts, std::uint64_t seed);

// The desk benchmark: K in-distribution Gaussians on a circle of radius r_id,
// a fraction rho of each class's training points relocated to small clusters
// at radius r_atypical on the ray toward that class's OOD cluster (labels
// kept -- these are the planted atypical samples), OOD test clusters on the
// same rays at radius r_ood, and auxiliary clusters angularly offset halfway
// between OOD rays. Memorizing the planted points drags the decision surface
// out toward the OOD region, which is the phenomenon under study.
struct AtypicalBenchmarkSpec {
  std::size_t dims = 2;
  std::size_t class_count = 3;
  double r_id = 4.0;
  double sigma_id = 0.5;
  std::size_t per_class = 500;       // training points per class
  double atypical_fraction = 0.05;   // rho
  double r_atypical = 7.0;
  double sigma_atypical = 0.3;
  double r_ood = 10.0;
  std::size_t ood_count = 1500;      // total OOD test points
  std::size_t aux_count = 1500;      // total auxiliary outliers
  std::size_t test_per_class = 500;  // clean ID test points per class
  std::uint64_t seed = 1;
};

struct AtypicalBenchmark {
  LabeledSet id_train;
  LabeledSet id_test;
  LabeledSet ood_test;
  LabeledSet aux;
  std::vector<std::size_t> planted;  // id_train row indices of atypical points
};

AtypicalBenchmark gen_atypical_benchmark(const AtypicalBenchmarkSpec& spec);

// ---------------------------------------------------------------------------
// Typical/atypical split: score every sample by its CE loss under a frozen
// checkpoint model; the atypical set is the selection_size highest losses,
// the typical set the selection_size lowest. Reports the checkpoint's
// accuracy on each set.
// ---------------------------------------------------------------------------
struct AtypicalSplit {
  LabeledSet typical;
  LabeledSet atypical;
  std::vector<std::size_t> typical_indices;
  std::vector<std::size_t> atypical_indices;
  double typical_accuracy = 0.0;
  double atypical_accuracy = 0.0;
};

AtypicalSplit atypical_split(const Classifier& checkpoint_model, const LabeledSet& data,
                             std::size_t selection_size);

// ---------------------------------------------------------------------------
// Dataset CSV: header "# umood-dataset v1, d=<d>, C=<C>", then one row per
// sample "f1,...,fd,label" (label -1 for unlabeled OOD/aux). Floats carry 17
// significant digits so a save/load round trip is exact.
// ---------------------------------------------------------------------------
LabeledSet load_csv(const std::filesystem::path& path);
void save_csv(const LabeledSet& set, const std::filesystem::path& path);

}  // namespace umood
