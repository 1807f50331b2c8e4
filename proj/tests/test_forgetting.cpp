#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "umood/data.hpp"
#include "umood/forgetting.hpp"
#include "umood/masking.hpp"
#include "umood/nn.hpp"

using namespace umood;

namespace {

LabeledSet random_batch(std::size_t n, std::size_t d, int classes, std::uint64_t seed) {
  RandomStream rng(seed);
  LabeledSet set;
  set.features = Matrix(n, d);
  set.class_count = classes;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      set.features(i, j) = rng.next_gaussian();
    }
    set.labels.push_back(static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(classes)));
  }
  return set;
}

ForgettingConstraint constraint_with_value(const Classifier& model, double value) {
  ForgettingConstraint fc;
  fc.value = value;
  fc.delta = 1.0;
  fc.mask = gen_mask(model, 1.0, 1);
  return fc;
}

}  // namespace

TEST_CASE("um_objective: kink and signs") {
  const UmObjective at = um_objective(0.7, 0.7);
  CHECK(at.value == 0.7);
  CHECK(at.grad_scale == 0);

  const UmObjective above = um_objective(1.0, 0.7);
  CHECK(above.value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(above.grad_scale == 1);

  const UmObjective below = um_objective(0.4, 0.7);
  CHECK(below.value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(below.grad_scale == -1);

  CHECK_THROWS_AS(um_objective(std::nan(""), 0.5), ArgumentError);
  CHECK_THROWS_AS(um_objective(0.5, -0.1), ArgumentError);
}

TEST_CASE("um_objective law: value >= c with equality iff loss == c") {
  RandomStream rng(2);
  for (int trial = 0; trial < 10000; ++trial) {
    const double c = 5.0 * rng.next_uniform();
    const double loss = 10.0 * rng.next_uniform();
    const UmObjective obj = um_objective(loss, c);
    CHECK(obj.value >= c);
    if (loss == c) {
      CHECK(obj.value == c);
    } else {
      CHECK(obj.value > c);
    }
    // exact equality case
    const UmObjective eq = um_objective(c, c);
    CHECK(eq.value == c);
    CHECK(eq.grad_scale == 0);
  }
}

TEST_CASE("um_finetune: update equals +-1 times the CE gradient") {
  RandomStream rng(13);
  Classifier model = Classifier::random_init({2, 5, 2}, rng);
  const LabeledSet data = random_batch(16, 2, 2, 7);

  for (double c_hat : {0.0, 100.0}) {  // forces grad_scale +1 then -1
    Classifier tuned = model;
    UmConfig cfg;
    cfg.constraint = constraint_with_value(model, c_hat);
    cfg.epochs = 1;
    cfg.lr = 0.05;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.batch_size = 16;  // single batch
    cfg.seed = 3;
    um_finetune(tuned, data, cfg);

    // reproduce the single step by hand
    RandomStream shuffle = RandomStream(3).child(0);
    const std::vector<std::size_t> perm = shuffle.permutation(16);
    const LabeledSet batch = data.subset(perm);
    const CeGrads g = ce_loss_and_grads(model, batch);
    const double scale = g.loss > c_hat ? 1.0 : -1.0;

    const std::vector<double> before = model.flatten();
    const std::vector<double> after = tuned.flatten();
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(after[i] == doctest::Approx(before[i] - 0.05 * scale * g.grads[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("um_finetune: lr zero leaves the model unchanged") {
  RandomStream rng(5);
  Classifier model = Classifier::random_init({2, 4, 2}, rng);
  const std::vector<double> before = model.flatten();
  UmConfig cfg;
  cfg.constraint = constraint_with_value(model, 0.5);
  cfg.epochs = 3;
  cfg.lr = 0.0;
  cfg.batch_size = 8;
  um_finetune(model, random_batch(16, 2, 2, 9), cfg);
  CHECK(model.flatten() == before);
}

TEST_CASE("um_finetune: deterministic replay") {
  RandomStream rng(6);
  const Classifier base = Classifier::random_init({2, 6, 3}, rng);
  const LabeledSet data = random_batch(32, 2, 3, 10);
  UmConfig cfg;
  cfg.constraint = constraint_with_value(base, 0.8);
  cfg.epochs = 4;
  cfg.lr = 0.02;
  cfg.batch_size = 8;
  cfg.seed = 77;

  Classifier m1 = base;
  Classifier m2 = base;
  const TrainResult r1 = um_finetune(m1, data, cfg);
  const TrainResult r2 = um_finetune(m2, data, cfg);
  CHECK(m1.flatten() == m2.flatten());
  REQUIRE(r1.record.rows.size() == r2.record.rows.size());
  for (std::size_t i = 0; i < r1.record.rows.size(); ++i) {
    CHECK(r1.record.rows[i].train_loss == r2.record.rows[i].train_loss);
    CHECK(r1.record.rows[i].objective == r2.record.rows[i].objective);
  }
}

TEST_CASE("umap_mask: prune-fraction semantics") {
  PopupScores scores;
  scores.per_layer.push_back(Matrix(1, 4, {0.1, 0.9, 0.5, 0.7}));
  scores.prune_fraction = 0.5;
  const LayerMask mask = umap_mask(scores);
  CHECK(mask.per_layer[0].data()[0] == 0.0);
  CHECK(mask.per_layer[0].data()[1] == 1.0);
  CHECK(mask.per_layer[0].data()[2] == 0.0);
  CHECK(mask.per_layer[0].data()[3] == 1.0);

  scores.prune_fraction = 0.0;
  const LayerMask all = umap_mask(scores);
  CHECK(all.retained(0) == 4);

  // retained counts: round((1-p) * n) per layer
  RandomStream rng(3);
  const Classifier model = Classifier::random_init({4, 25, 2}, rng);
  for (double p : {0.3, 0.5, 0.9}) {
    PopupScores s = init_popup_scores(model, p, 5);
    const LayerMask m = umap_mask(s);
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
      const double n = static_cast<double>(m.per_layer[l].size());
      CHECK(m.retained(l) == static_cast<std::size_t>(std::llround((1.0 - p) * n)));
    }
  }
}

TEST_CASE("umap_train: frozen weights, straight-through update at p = 0") {
  RandomStream rng(21);
  const Classifier model = Classifier::random_init({2, 4, 2}, rng);
  const std::vector<double> params_before = model.flatten();
  const LabeledSet data = random_batch(12, 2, 2, 31);

  UmapConfig cfg;
  cfg.constraint = constraint_with_value(model, 100.0);  // grad_scale = -1 throughout
  cfg.prune_fraction = 0.0;
  cfg.epochs = 1;
  cfg.lr = 0.1;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.batch_size = 12;
  cfg.seed = 4;

  const UmapResult result = umap_train(model, data, cfg);
  CHECK(model.flatten() == params_before);  // bitwise frozen

  // with p = 0 the mask is the identity, so the score update direction is
  // grad_scale * (grad_w CE .* w)
  RandomStream shuffle = RandomStream(4).child(0);
  const std::vector<std::size_t> perm = shuffle.permutation(12);
  const LabeledSet batch = data.subset(perm);
  const CeGrads g = ce_loss_and_grads(model, batch);
  const double scale = g.loss > 100.0 ? 1.0 : -1.0;

  const PopupScores init = init_popup_scores(model, 0.0, RandomStream(4).child(1).seed());
  std::size_t ppos = 0;
  std::size_t checked = 0;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const Matrix& w = model.layer(l).weight;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double expected =
          init.per_layer[l].data()[i] - 0.1 * scale * g.grads[ppos + i] * w.data()[i];
      CHECK(result.scores.per_layer[l].data()[i] == doctest::Approx(expected).epsilon(1e-12));
      ++checked;
    }
    ppos += w.size() + model.layer(l).bias.size();
  }
  CHECK(checked == 2 * 4 + 4 * 2);
}

TEST_CASE("umap_train: deterministic replay") {
  RandomStream rng(8);
  const Classifier model = Classifier::random_init({2, 6, 2}, rng);
  const LabeledSet data = random_batch(24, 2, 2, 15);
  UmapConfig cfg;
  cfg.constraint = constraint_with_value(model, 0.5);
  cfg.prune_fraction = 0.5;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 99;

  const UmapResult a = umap_train(model, data, cfg);
  const UmapResult b = umap_train(model, data, cfg);
  for (std::size_t l = 0; l < a.mask.layer_count(); ++l) {
    for (std::size_t i = 0; i < a.mask.per_layer[l].size(); ++i) {
      CHECK(a.mask.per_layer[l].data()[i] == b.mask.per_layer[l].data()[i]);
    }
  }
  for (std::size_t i = 0; i < a.record.rows.size(); ++i) {
    CHECK(a.record.rows[i].train_loss == b.record.rows[i].train_loss);
  }
}
