#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "umood/data.hpp"
#include "umood/nn.hpp"
#include "umood/numerics.hpp"

namespace umood {

// ---------------------------------------------------------------------------
// LayerMask: per-layer binary retention pattern (entries 0.0/1.0, shaped like
// the weight matrices) plus the real-valued scores that generated it. Layer l
// retains exactly llround(keep_fraction[l] * n_l) weights: the highest-scoring
// ones, ties broken by lower flat index first.
// ---------------------------------------------------------------------------
struct LayerMask {
  std::vector<Matrix> per_layer;       // 0/1 entries, shapes match weights
  std::vector<Matrix> scores;          // generating scores (empty after file load)
  std::vector<double> keep_fraction;   // delta per layer
  std::uint64_t seed = 0;

  std::size_t layer_count() const { return per_layer.size(); }
  std::size_t retained(std::size_t l) const;
  std::size_t retained_total() const;
  std::size_t weight_count() const;
};

// 0/1 matrix retaining the k highest scores (ties: lower flat index wins).
Matrix top_k_mask(const Matrix& scores, std::size_t k);

// Random layer-wise mask: per weight a standard-normal popup score, per layer
// the top llround(delta_keep * n_l) scores retained. delta_keep is the
// fraction RETAINED. Throws ArgumentError unless 0 <= delta_keep <= 1.
LayerMask gen_mask(const Classifier& model, double delta_keep, std::uint64_t seed);

// Build a retention mask from externally supplied scores (keep fraction per
// layer applied uniformly).
LayerMask mask_from_scores(std::vector<Matrix> scores, double keep_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// ForgettingConstraint: the mean CE loss of the masked frozen model over the
// full ID training set -- the target loss level of the forgetting objective.
// Computed in a single pass with no parameter updates; the generating mask is
// frozen alongside the value.
// ---------------------------------------------------------------------------
struct ForgettingConstraint {
  double value = 0.0;   // c-hat
  double delta = 1.0;   // keep fraction used
  std::size_t dataset_size = 0;
  std::uint64_t seed = 0;
  LayerMask mask;
};

ForgettingConstraint estimate_constraint(const Classifier& model, const LayerMask& mask,
                                         const LabeledSet& data);

// ---------------------------------------------------------------------------
// Probe sweep: one fresh mask per grid value (child seeds), reporting the
// masked loss, the set of samples the masked model misclassifies, and masked
// accuracy. Grid values must lie in (0, 1].
// ---------------------------------------------------------------------------
struct ProbeReport {
  double delta = 1.0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> misclassified;
};

std::vector<ProbeReport> probe_sweep(const Classifier& model,
                                     std::span<const double> delta_grid, const LabeledSet& data,
                                     std::uint64_t seed);

// CSV rows "delta,loss,accuracy,n_misclassified".
void write_probe_csv(std::span<const ProbeReport> reports, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Mask file: ASCII header "UMMASK1 <L> <r0> <c0> ... <rL-1> <cL-1>\n", then
// per layer the retention flags bit-packed row-major, LSB-first within each
// byte. Scores are not persisted; a loaded mask carries empty scores and the
// realized keep fractions.
// ---------------------------------------------------------------------------
void save_mask(const LayerMask& mask, const std::filesystem::path& path);
LayerMask load_mask(const std::filesystem::path& path);

}  // namespace umood
