#include "umood/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "umood/version.hpp"

namespace umood {

double oe_loss(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw ArgumentError("oe_loss: need at least 2 classes");
  }
  double mean = 0.0;
  for (double v : logits) {
    mean += v;
  }
  mean /= static_cast<double>(logits.size());
  return logsumexp(logits) - mean;
}

double energy_bound_loss(std::span<const double> id_energies,
                         std::span<const double> ood_energies, double m_in, double m_out) {
  for (double e : id_energies) {
    if (!std::isfinite(e)) {
      throw ArgumentError("energy_bound_loss: non-finite ID energy");
    }
  }
  for (double e : ood_energies) {
    if (!std::isfinite(e)) {
      throw ArgumentError("energy_bound_loss: non-finite OOD energy");
    }
  }
  double in_term = 0.0;
  for (double e : id_energies) {
    const double h = std::max(0.0, e - m_in);
    in_term += h * h;
  }
  if (!id_energies.empty()) {
    in_term /= static_cast<double>(id_energies.size());
  }
  double out_term = 0.0;
  for (double e : ood_energies) {
    const double h = std::max(0.0, m_out - e);
    out_term += h * h;
  }
  if (!ood_energies.empty()) {
    out_term /= static_cast<double>(ood_energies.size());
  }
  return in_term + out_term;
}

TrainResult finetune_with_outliers(Classifier& model, const LabeledSet& id_data,
                                   const LabeledSet& aux_data, const ExposureConfig& exposure,
                                   const TrainConfig& config, const EpochHook& hook) {
  if (id_data.size() == 0) {
    throw ArgumentError("finetune_with_outliers: empty ID data");
  }
  if (aux_data.size() == 0) {
    throw ArgumentError("finetune_with_outliers: empty aux data");
  }
  if (aux_data.dim() != id_data.dim()) {
    throw ArgumentError("finetune_with_outliers: aux/ID dimension mismatch");
  }
  if (exposure.lambda < 0.0) {
    throw ArgumentError("finetune_with_outliers: lambda must be >= 0");
  }

  RandomStream run_stream(config.seed);
  RandomStream shuffle_stream = run_stream.child(0);  // same derivation as nn::train
  RandomStream aux_stream = run_stream.child(1);

  std::vector<double> params = model.flatten();
  std::vector<double> combined(params.size());
  SgdState opt;
  TrainResult result;
  result.record.seed = config.seed;
  result.record.code_version = kCodeVersion;
  result.record.rng_algorithm = RandomStream::kAlgorithm;

  const std::size_t n = id_data.size();
  const std::size_t c_count = model.class_count();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const std::vector<std::size_t> perm = shuffle_stream.permutation(n);
    double ce_sum = 0.0;
    double obj_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                         perm.begin() + static_cast<std::ptrdiff_t>(stop));
      const LabeledSet batch = id_data.subset(idx);

      double objective = 0.0;
      if (exposure.lambda == 0.0) {
        // exact reduction to plain training
        const CeGrads g = ce_loss_and_grads(model, batch);
        if (!std::isfinite(g.loss)) {
          throw TrainingError("finetune_with_outliers: non-finite loss at epoch " +
                              std::to_string(epoch));
        }
        ce_sum += g.loss;
        objective = g.loss;
        std::copy(g.grads.begin(), g.grads.end(), combined.begin());
      } else {
        // aux batch drawn independently per step (uniform with replacement)
        std::vector<std::size_t> aux_idx(exposure.aux_batch_size);
        for (std::size_t& i : aux_idx) {
          i = static_cast<std::size_t>(aux_stream.next_u64() % aux_data.size());
        }
        const LabeledSet aux_batch = aux_data.subset(aux_idx);
        const double inv_aux = 1.0 / static_cast<double>(aux_batch.size());

        if (exposure.method == ExposureMethod::kOe) {
          const CeGrads g = ce_loss_and_grads(model, batch);
          double oe_sum = 0.0;
          auto aux_seed = [&](std::size_t, std::span<const double> logits,
                              std::span<double> seed) {
            oe_sum += oe_loss(logits) * inv_aux;
            const std::vector<double> p = softmax(logits);
            const double unif = 1.0 / static_cast<double>(c_count);
            for (std::size_t c = 0; c < logits.size(); ++c) {
              seed[c] = exposure.lambda * inv_aux * (p[c] - unif);
            }
          };
          const ReversePass aux_rp = reverse_pass(model, aux_batch.features, aux_seed);
          if (!std::isfinite(g.loss) || !std::isfinite(oe_sum)) {
            throw TrainingError("finetune_with_outliers: non-finite loss at epoch " +
                                std::to_string(epoch));
          }
          ce_sum += g.loss;
          objective = g.loss + exposure.lambda * oe_sum;
          for (std::size_t i = 0; i < combined.size(); ++i) {
            combined[i] = g.grads[i] + aux_rp.param_grads[i];
          }
        } else {
          // Energy-bounded term added to CE: squared hinges on raw energies,
          // E = -logsumexp(z) at the fixed T = 1 convention.
          const double inv_id = 1.0 / static_cast<double>(batch.size());
          double ce_loss_val = 0.0;
          double in_term = 0.0;
          auto id_seed = [&](std::size_t s, std::span<const double> logits,
                             std::span<double> seed) {
            const double lse = logsumexp(logits);
            const int y = batch.labels[s];
            ce_loss_val += (lse - logits[static_cast<std::size_t>(y)]) * inv_id;
            const double energy = -lse;
            const double hinge = std::max(0.0, energy - exposure.m_in);
            in_term += hinge * hinge * inv_id;
            // d/dz: CE term + lambda * 2*hinge * dE/dz, dE/dz = -softmax
            for (std::size_t c = 0; c < logits.size(); ++c) {
              const double p = std::exp(logits[c] - lse);
              seed[c] = inv_id * p +
                        exposure.lambda * inv_id * 2.0 * hinge * (-p);
            }
            seed[static_cast<std::size_t>(y)] -= inv_id;
          };
          const ReversePass id_rp = reverse_pass(model, batch.features, id_seed);

          double out_term = 0.0;
          auto aux_seed = [&](std::size_t, std::span<const double> logits,
                              std::span<double> seed) {
            const double lse = logsumexp(logits);
            const double energy = -lse;
            const double hinge = std::max(0.0, exposure.m_out - energy);
            out_term += hinge * hinge * inv_aux;
            for (std::size_t c = 0; c < logits.size(); ++c) {
              const double p = std::exp(logits[c] - lse);
              seed[c] = exposure.lambda * inv_aux * 2.0 * hinge * p;
            }
          };
          const ReversePass aux_rp = reverse_pass(model, aux_batch.features, aux_seed);
          if (!std::isfinite(ce_loss_val) || !std::isfinite(in_term) || !std::isfinite(out_term)) {
            throw TrainingError("finetune_with_outliers: non-finite loss at epoch " +
                                std::to_string(epoch));
          }
          ce_sum += ce_loss_val;
          objective = ce_loss_val + exposure.lambda * (in_term + out_term);
          for (std::size_t i = 0; i < combined.size(); ++i) {
            combined[i] = id_rp.param_grads[i] + aux_rp.param_grads[i];
          }
        }
      }
      obj_sum += objective;
      ++batches;
      sgd_step(params, combined, opt, lr, config.momentum, config.weight_decay);
      model.set_from_flat(params);
    }

    RunRow row;
    row.epoch = epoch;
    row.train_loss = ce_sum / static_cast<double>(batches);
    row.objective = obj_sum / static_cast<double>(batches);
    {
      const Matrix logits = forward_batch(model, id_data.features);
      std::size_t correct = 0;
      for (std::size_t s = 0; s < id_data.size(); ++s) {
        const auto lrow = logits.row(s);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < lrow.size(); ++c) {
          if (lrow[c] > lrow[arg]) {
            arg = c;
          }
        }
        if (static_cast<int>(arg) == id_data.labels[s]) {
          ++correct;
        }
      }
      row.train_acc = static_cast<double>(correct) / static_cast<double>(id_data.size());
    }
    if (hook) {
      hook(epoch, model, row);
    }
    result.record.append(std::move(row));
    result.per_epoch.push_back(Checkpoint::from(model, epoch, config.seed));
  }
  return result;
}

}  // namespace umood
