#include "umood/forgetting.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "umood/version.hpp"

namespace umood {

UmObjective um_objective(double mean_loss, double c_hat) {
  if (!std::isfinite(mean_loss) || !std::isfinite(c_hat)) {
    throw ArgumentError("um_objective: non-finite inputs");
  }
  if (c_hat < 0.0) {
    throw ArgumentError("um_objective: constraint must be >= 0");
  }
  UmObjective obj;
  obj.value = std::abs(mean_loss - c_hat) + c_hat;
  obj.grad_scale = mean_loss > c_hat ? 1 : (mean_loss < c_hat ? -1 : 0);
  return obj;
}

TrainResult um_finetune(Classifier& model, const LabeledSet& data, const UmConfig& config,
                        const EpochHook& hook) {
  if (data.size() == 0) {
    throw ArgumentError("um_finetune: empty dataset");
  }
  if (config.epochs < 1 || config.batch_size < 1) {
    throw ArgumentError("um_finetune: epochs and batch size must be >= 1");
  }
  const double c_hat = config.constraint.value;
  if (!(c_hat >= 0.0)) {
    throw ArgumentError("um_finetune: constraint must be >= 0");
  }

  RandomStream run_stream(config.seed);
  RandomStream shuffle_stream = run_stream.child(0);

  std::vector<double> params = model.flatten();
  std::vector<double> scaled(params.size());
  SgdState opt;
  TrainResult result;
  result.record.seed = config.seed;
  result.record.code_version = kCodeVersion;
  result.record.rng_algorithm = RandomStream::kAlgorithm;

  const std::size_t n = data.size();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> perm = shuffle_stream.permutation(n);
    double loss_sum = 0.0;
    double obj_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                         perm.begin() + static_cast<std::ptrdiff_t>(stop));
      const LabeledSet batch = data.subset(idx);
      const CeGrads g = ce_loss_and_grads(model, batch);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("um_finetune: non-finite loss at epoch " + std::to_string(epoch));
      }
      const UmObjective obj = um_objective(g.loss, c_hat);
      loss_sum += g.loss;
      obj_sum += obj.value;
      ++batches;
      const double s = static_cast<double>(obj.grad_scale);
      for (std::size_t i = 0; i < g.grads.size(); ++i) {
        scaled[i] = s * g.grads[i];
      }
      sgd_step(params, scaled, opt, config.lr, config.momentum, config.weight_decay);
      model.set_from_flat(params);
    }

    RunRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(batches);
    row.objective = obj_sum / static_cast<double>(batches);
    row.train_acc = 0.0;
    {
      const Matrix logits = forward_batch(model, data.features);
      std::size_t correct = 0;
      for (std::size_t s = 0; s < data.size(); ++s) {
        const auto lrow = logits.row(s);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < lrow.size(); ++c) {
          if (lrow[c] > lrow[arg]) {
            arg = c;
          }
        }
        if (static_cast<int>(arg) == data.labels[s]) {
          ++correct;
        }
      }
      row.train_acc = static_cast<double>(correct) / static_cast<double>(data.size());
    }
    if (hook) {
      hook(epoch, model, row);
    }
    result.record.append(std::move(row));
    result.per_epoch.push_back(Checkpoint::from(model, epoch, config.seed));
  }
  return result;
}

// ---------------------------------------------------------------------------
// UMAP
// ---------------------------------------------------------------------------

PopupScores init_popup_scores(const Classifier& model, double prune_fraction, std::uint64_t seed) {
  if (prune_fraction < 0.0 || prune_fraction >= 1.0) {
    throw ArgumentError("init_popup_scores: prune fraction outside [0, 1)");
  }
  RandomStream rng(seed);
  PopupScores scores;
  scores.prune_fraction = prune_fraction;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const Matrix& w = model.layer(l).weight;
    Matrix s(w.rows(), w.cols());
    for (double& v : s.data()) {
      v = rng.next_gaussian();
    }
    scores.per_layer.push_back(std::move(s));
  }
  return scores;
}

LayerMask umap_mask(const PopupScores& scores) {
  LayerMask mask;
  for (const Matrix& s : scores.per_layer) {
    const double keep = 1.0 - scores.prune_fraction;
    const std::size_t k =
        static_cast<std::size_t>(std::llround(keep * static_cast<double>(s.size())));
    mask.per_layer.push_back(top_k_mask(s, k));
    mask.keep_fraction.push_back(keep);
  }
  return mask;
}

namespace {

// Scores flatten to weight-shaped blocks only (biases carry no scores).
std::vector<double> flatten_scores(const PopupScores& scores) {
  std::vector<double> flat;
  for (const Matrix& s : scores.per_layer) {
    flat.insert(flat.end(), s.data().begin(), s.data().end());
  }
  return flat;
}

void unflatten_scores(std::span<const double> flat, PopupScores& scores) {
  std::size_t pos = 0;
  for (Matrix& s : scores.per_layer) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), s.size(), s.data().begin());
    pos += s.size();
  }
}

}  // namespace

UmapResult umap_train(const Classifier& model, const LabeledSet& data, const UmapConfig& config,
                      const UmapEpochHook& hook) {
  if (data.size() == 0) {
    throw ArgumentError("umap_train: empty dataset");
  }
  if (config.epochs < 1 || config.batch_size < 1) {
    throw ArgumentError("umap_train: epochs and batch size must be >= 1");
  }
  for (int y : data.labels) {
    if (y < 0 || y >= static_cast<int>(model.class_count())) {
      throw ArgumentError("umap_train: label out of range [0, C)");
    }
  }
  const double c_hat = config.constraint.value;
  if (!(c_hat >= 0.0)) {
    throw ArgumentError("umap_train: constraint must be >= 0");
  }

  RandomStream run_stream(config.seed);
  RandomStream shuffle_stream = run_stream.child(0);

  UmapResult result;
  result.scores = init_popup_scores(model, config.prune_fraction, run_stream.child(1).seed());
  result.record.seed = config.seed;
  result.record.code_version = kCodeVersion;
  result.record.rng_algorithm = RandomStream::kAlgorithm;

  std::vector<double> flat_scores = flatten_scores(result.scores);
  std::vector<double> score_grads(flat_scores.size());
  SgdState opt;

  const std::size_t n = data.size();
  const std::size_t L = model.layer_count();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> perm = shuffle_stream.permutation(n);
    double loss_sum = 0.0;
    double obj_sum = 0.0;
    std::size_t batches = 0;
    LayerMask mask;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                         perm.begin() + static_cast<std::ptrdiff_t>(stop));
      const LabeledSet batch = data.subset(idx);

      mask = umap_mask(result.scores);
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      double batch_loss = 0.0;
      auto seed_fn = [&](std::size_t s, std::span<const double> logits, std::span<double> seed) {
        const double lse = logsumexp(logits);
        const int y = batch.labels[s];
        batch_loss += (lse - logits[static_cast<std::size_t>(y)]) * inv_b;
        for (std::size_t c = 0; c < logits.size(); ++c) {
          seed[c] = std::exp(logits[c] - lse) * inv_b;
        }
        seed[static_cast<std::size_t>(y)] -= inv_b;
      };
      const ReversePass rp = reverse_pass(model, batch.features, seed_fn, &mask);
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("umap_train: non-finite loss at epoch " + std::to_string(epoch));
      }
      const UmObjective obj = um_objective(batch_loss, c_hat);
      loss_sum += batch_loss;
      obj_sum += obj.value;
      ++batches;

      // Straight-through: dL/ds = grad_scale * (dl/dW_eff) .* W.
      const double s = static_cast<double>(obj.grad_scale);
      std::size_t spos = 0;  // into flat scores (weight blocks only)
      std::size_t ppos = 0;  // into canonical param grads (weights + biases)
      for (std::size_t l = 0; l < L; ++l) {
        const Matrix& w = model.layer(l).weight;
        for (std::size_t i = 0; i < w.size(); ++i) {
          score_grads[spos + i] = s * rp.param_grads[ppos + i] * w.data()[i];
        }
        spos += w.size();
        ppos += w.size() + model.layer(l).bias.size();
      }
      sgd_step(flat_scores, score_grads, opt, config.lr, config.momentum, config.weight_decay);
      unflatten_scores(flat_scores, result.scores);
    }

    mask = umap_mask(result.scores);
    RunRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(batches);
    row.objective = obj_sum / static_cast<double>(batches);
    {
      const Matrix logits = forward_batch(model, data.features, &mask);
      std::size_t correct = 0;
      for (std::size_t s = 0; s < data.size(); ++s) {
        const auto lrow = logits.row(s);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < lrow.size(); ++c) {
          if (lrow[c] > lrow[arg]) {
            arg = c;
          }
        }
        if (static_cast<int>(arg) == data.labels[s]) {
          ++correct;
        }
      }
      row.train_acc = static_cast<double>(correct) / static_cast<double>(data.size());
    }
    if (hook) {
      hook(epoch, model, mask, row);
    }
    result.record.append(std::move(row));
  }

  result.mask = umap_mask(result.scores);
  result.mask.seed = config.seed;
  return result;
}

}  // namespace umood
