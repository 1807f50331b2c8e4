#pragma once

#include <cstdint>
#include <vector>

#include "umood/masking.hpp"
#include "umood/nn.hpp"

namespace umood {

// ---------------------------------------------------------------------------
// The forgetting objective |l - c| + c. Its parameter gradient is
// grad_scale * dl/dtheta with grad_scale = sign(l - c): descent on the CE
// loss above the constraint, ascent (forgetting) below it, and no step at the
// kink, where the run is meant to stabilize.
// ---------------------------------------------------------------------------
struct UmObjective {
  double value = 0.0;
  int grad_scale = 0;  // -1, 0, +1
};

UmObjective um_objective(double mean_loss, double c_hat);

// ---------------------------------------------------------------------------
// UM fine-tuning (constraint estimated once, frozen for the whole run).
// ---------------------------------------------------------------------------
struct UmConfig {
  ForgettingConstraint constraint;
  std::size_t epochs = 20;
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
};

// Minibatch SGD on the forgetting objective: per batch the CE loss and
// gradient are computed, scaled by grad_scale, and stepped. The per-minibatch
// mean loss is compared against the frozen constraint.
TrainResult um_finetune(Classifier& model, const LabeledSet& data, const UmConfig& config,
                        const EpochHook& hook = nullptr);

// ---------------------------------------------------------------------------
// UMAP: learn a pruning mask over a frozen model.
// ---------------------------------------------------------------------------
struct PopupScores {
  std::vector<Matrix> per_layer;  // shaped like weights
  double prune_fraction = 0.5;    // p: fraction REMOVED per layer

  std::size_t layer_count() const { return per_layer.size(); }
};

// Standard-normal score init, seeded.
PopupScores init_popup_scores(const Classifier& model, double prune_fraction, std::uint64_t seed);

// Binary mask from scores: per layer the top (1-p)*n_l scores are retained
// (the lowest fraction p removed), ties broken by flat index.
LayerMask umap_mask(const PopupScores& scores);

struct UmapConfig {
  ForgettingConstraint constraint;
  double prune_fraction = 0.5;
  std::size_t epochs = 50;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
};

struct UmapResult {
  PopupScores scores;
  LayerMask mask;        // final mask from the learned scores
  RunRecord record;
};

// Per-epoch observer for the pruning loop; receives the mask realized from
// the current scores.
using UmapEpochHook = std::function<void(std::size_t epoch, const Classifier& model,
                                         const LayerMask& mask, RunRow& row)>;

// Each iteration rebuilds the mask from the current scores, evaluates the
// forgetting objective on the masked output, and updates the scores by
// straight-through gradients:
//   dL/ds_w = grad_scale * (dl/d(effective weight)) * w
// (the binary mask is treated as the identity on the backward pass). Model
// parameters are never modified.
UmapResult umap_train(const Classifier& model, const LabeledSet& data, const UmapConfig& config,
                      const UmapEpochHook& hook = nullptr);

}  // namespace umood
