#pragma once

#include <span>

#include "umood/nn.hpp"

namespace umood {

// ---------------------------------------------------------------------------
// Outlier-exposure objectives, composable with UM/UMAP starting points.
// ---------------------------------------------------------------------------

enum class ExposureMethod { kOe, kEnergyBound };

struct ExposureConfig {
  ExposureMethod method = ExposureMethod::kOe;
  double lambda = 0.5;   // balancing weight on the exposure term
  double m_in = -25.0;   // energy-bound thresholds
  double m_out = -7.0;
  std::size_t aux_batch_size = 256;
};

// Cross-entropy from the logits to the uniform distribution, in the
// logsumexp-minus-mean form: logsumexp(z) - mean(z). Minimized (= ln C) at
// constant logits; shift-invariant.
double oe_loss(std::span<const double> logits);

// mean_in (max(0, E - m_in))^2 + mean_out (max(0, m_out - E))^2 over raw
// energies (T = 1 convention: E = -logsumexp(logits)). ID energies above m_in
// and OOD energies below m_out are penalized.
double energy_bound_loss(std::span<const double> id_energies, std::span<const double> ood_energies,
                         double m_in, double m_out);

// Minibatch SGD on CE(id) + lambda * exposure-term(aux). ID batches reshuffle
// from the run stream's child(0) exactly as nn::train does (lambda = 0 is
// bit-identical to plain training); aux batches draw independently from
// child(1). Aux data must be non-empty and is treated as label-free.
TrainResult finetune_with_outliers(Classifier& model, const LabeledSet& id_data,
                                   const LabeledSet& aux_data, const ExposureConfig& exposure,
                                   const TrainConfig& config, const EpochHook& hook = nullptr);

}  // namespace umood
