#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "umood/data.hpp"
#include "umood/nn.hpp"
#include "umood/scoring.hpp"

using namespace umood;

namespace {

// model whose logits are a fixed vector regardless of input
Classifier constant_logits_model(const std::vector<double>& logits, std::size_t input_dim) {
  Classifier model({input_dim, logits.size()});
  model.layer(0).bias = logits;
  return model;
}

// single linear layer with identity weights: logits == input
Classifier identity_model(std::size_t d) {
  Classifier model({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    model.layer(0).weight(i, i) = 1.0;
  }
  return model;
}

}  // namespace

TEST_CASE("score_msp analytic values") {
  const std::vector<double> x{0.3, -0.4};

  const Classifier uniform10 = constant_logits_model(std::vector<double>(10, 0.0), 2);
  CHECK(score_msp(uniform10, x) == doctest::Approx(0.1).epsilon(1e-14));

  const Classifier ln3 = constant_logits_model({std::log(3.0), 0.0}, 2);
  CHECK(score_msp(ln3, x) == doctest::Approx(0.75).epsilon(1e-14));

  RandomStream rng(4);
  const Classifier random = Classifier::random_init({2, 5, 4}, rng);
  for (int t = 0; t < 20; ++t) {
    const std::vector<double> input{rng.next_gaussian(), rng.next_gaussian()};
    const auto logits = forward(random, input);
    const auto p = softmax(logits);
    const double expected = *std::max_element(p.begin(), p.end());
    CHECK(score_msp(random, input) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(score_msp(random, input) > 1.0 / 4.0 - 1e-12);
    CHECK(score_msp(random, input) <= 1.0);
  }
}

TEST_CASE("score_energy analytic values and shift rule") {
  const std::vector<double> x{1.0, 1.0};

  const Classifier two_zeros = constant_logits_model({0.0, 0.0}, 2);
  CHECK(score_energy(two_zeros, x, 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));

  const Classifier four_ones = constant_logits_model({1.0, 1.0, 1.0, 1.0}, 2);
  CHECK(score_energy(four_ones, x, 1.0) ==
        doctest::Approx(-(1.0 + std::log(4.0))).epsilon(1e-14));

  // logits + a => energy - a
  RandomStream rng(9);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> logits{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()};
    const double a = 3.0 * rng.next_gaussian();
    std::vector<double> shifted(logits);
    for (double& v : shifted) {
      v += a;
    }
    const Classifier base = constant_logits_model(logits, 2);
    const Classifier moved = constant_logits_model(shifted, 2);
    CHECK(std::abs(score_energy(moved, x, 1.0) - (score_energy(base, x, 1.0) - a)) <= 1e-9);
  }

  // Energy(T=1) == -logsumexp(logits)
  const Classifier m = constant_logits_model({0.2, -1.4, 3.0}, 2);
  CHECK(std::abs(score_energy(m, x, 1.0) + logsumexp(std::vector<double>{0.2, -1.4, 3.0})) <=
        1e-9);

  CHECK_THROWS_AS(score_energy(m, x, 0.0), ArgumentError);
}

TEST_CASE("score_odin reduces exactly to MSP at eps=0, T=1") {
  RandomStream rng(11);
  const Classifier model = Classifier::random_init({3, 6, 4}, rng);
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> x{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()};
    CHECK(score_odin(model, x, 1.0, 0.0) == score_msp(model, x));  // bit-exact
  }
  const ScoreConfig defaults = ScoreConfig::odin();
  CHECK(defaults.temperature == 1.0e4);
  CHECK(defaults.epsilon == 1.4e-3);
}

TEST_CASE("odin input gradient matches finite differences") {
  RandomStream rng(13);
  const Classifier model = Classifier::random_init({2, 3, 2}, rng);
  const double temperature = 10.0;
  for (int t = 0; t < 10; ++t) {
    const std::vector<double> x{rng.next_gaussian(), rng.next_gaussian()};
    const auto analytic = odin_input_grad(model, x, temperature);
    auto objective = [&](std::span<const double> point) {
      const auto logits = forward(model, point);
      std::vector<double> scaled(logits);
      for (double& v : scaled) {
        v /= temperature;
      }
      const auto p = softmax(scaled);
      return std::log(*std::max_element(p.begin(), p.end()));
    };
    const auto fd = finite_diff_grad(objective, x, 1e-5);
    CHECK(oracles::rel_err(analytic, fd) <= 1e-5);
  }
}

TEST_CASE("odin perturbation moves the score up") {
  RandomStream rng(40);
  const Classifier model = Classifier::random_init({2, 8, 3}, rng);
  int improved = 0;
  for (int t = 0; t < 20; ++t) {
    const std::vector<double> x{rng.next_gaussian(), rng.next_gaussian()};
    const double plain = score_odin(model, x, 1.0, 0.0);
    const double perturbed = score_odin(model, x, 1.0, 1e-3);
    if (perturbed >= plain - 1e-12) {
      ++improved;
    }
  }
  CHECK(improved >= 18);  // the perturbation targets a higher max softmax
}

TEST_CASE("mahalanobis: hand-computable fits and scores") {
  const Classifier id2 = identity_model(2);
  const std::size_t logits_layer = std::numeric_limits<std::size_t>::max();

  LabeledSet train;
  train.features = Matrix(8, 2, {
      0.0, 0.0,  2.0, 0.0,  1.0, 1.0,  1.0, -1.0,   // class 0 around (1, 0)
      5.0, 5.0,  7.0, 5.0,  6.0, 6.0,  6.0, 4.0});  // class 1 around (6, 5)
  train.labels = {0, 0, 0, 0, 1, 1, 1, 1};
  train.class_count = 2;

  const MahalanobisModel mahal = fit_mahalanobis(id2, train, logits_layer, 0.0);
  CHECK(mahal.class_means(0, 0) == doctest::Approx(1.0));
  CHECK(mahal.class_means(0, 1) == doctest::Approx(0.0));
  CHECK(mahal.class_means(1, 0) == doctest::Approx(6.0));
  CHECK(mahal.class_means(1, 1) == doctest::Approx(5.0));
  // tied covariance: 8 centered points, scatter diag(4, 4)/8 = diag(0.5)
  CHECK(mahal.covariance(0, 0) == doctest::Approx(0.5));
  CHECK(mahal.covariance(1, 1) == doctest::Approx(0.5));
  CHECK(mahal.covariance(0, 1) == doctest::Approx(0.0));

  // feature at a class mean scores zero
  const std::vector<double> at_mean{1.0, 0.0};
  CHECK(score_mahalanobis(mahal, id2, at_mean) == doctest::Approx(0.0).epsilon(1e-12));

  // (2, 0): nearer mean distance^2 = 1/0.5 = 2 -> score -2
  const std::vector<double> off{2.0, 0.0};
  CHECK(score_mahalanobis(mahal, id2, off) == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK(score_mahalanobis(mahal, id2, off) <= 0.0);
}

TEST_CASE("mahalanobis: identity covariance cases from a handcrafted model") {
  const Classifier id2 = identity_model(2);
  MahalanobisModel mahal;
  mahal.feature_layer = 1;
  mahal.class_means = Matrix(2, 2, {0.0, 0.0, 10.0, 0.0});
  mahal.chol = Matrix(2, 2, {1.0, 0.0, 0.0, 1.0});  // identity covariance

  const std::vector<double> at5{5.0, 0.0};
  MahalanobisModel single = mahal;
  single.class_means = Matrix(1, 2, {0.0, 0.0});
  CHECK(score_mahalanobis(single, id2, at5) == doctest::Approx(-25.0));

  const std::vector<double> at1{1.0, 0.0};
  CHECK(score_mahalanobis(mahal, id2, at1) == doctest::Approx(-1.0));  // max(-1, -81)
}

TEST_CASE("mahalanobis: degenerate features need the ridge") {
  const Classifier id2 = identity_model(2);
  LabeledSet degenerate;
  degenerate.features = Matrix(4, 2, {1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0});
  degenerate.labels = {0, 0, 1, 1};
  degenerate.class_count = 2;
  const std::size_t logits_layer = std::numeric_limits<std::size_t>::max();

  CHECK_THROWS_WITH_AS(fit_mahalanobis(id2, degenerate, logits_layer, 0.0),
                       doctest::Contains("ridge"), NumericError);
  const MahalanobisModel ridged = fit_mahalanobis(id2, degenerate, logits_layer, 1e-6);
  CHECK(ridged.ridge == 1e-6);
  CHECK(score_mahalanobis(ridged, id2, std::vector<double>{1.0, 1.0}) ==
        doctest::Approx(0.0).epsilon(1e-9));

  LabeledSet tiny;
  tiny.features = Matrix(2, 2, {0.0, 0.0, 1.0, 1.0});
  tiny.labels = {0, 1};
  tiny.class_count = 2;
  CHECK_THROWS_AS(fit_mahalanobis(id2, tiny, logits_layer, 0.0), ArgumentError);
}

TEST_CASE("mahalanobis fit is permutation invariant") {
  RandomStream rng(55);
  const Classifier model = Classifier::random_init({2, 6, 2}, rng);
  LabeledSet train;
  train.features = Matrix(40, 2);
  train.class_count = 2;
  for (std::size_t i = 0; i < 40; ++i) {
    train.features(i, 0) = rng.next_gaussian();
    train.features(i, 1) = rng.next_gaussian();
    train.labels.push_back(static_cast<int>(i % 2));
  }
  std::vector<std::size_t> reversed(40);
  for (std::size_t i = 0; i < 40; ++i) {
    reversed[i] = 39 - i;
  }
  const MahalanobisModel a = fit_mahalanobis(model, train, 0, 1e-8);
  const MahalanobisModel b = fit_mahalanobis(model, train.subset(reversed), 0, 1e-8);
  for (std::size_t i = 0; i < a.covariance.size(); ++i) {
    CHECK(a.covariance.data()[i] == doctest::Approx(b.covariance.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("margin") {
  const std::vector<double> logits{3.0, 1.0, 0.0};
  CHECK(margin(logits, 0) == 2.0);
  CHECK(margin(logits, 1) == -2.0);
  CHECK_THROWS_AS(margin(logits, 3), ArgumentError);
  CHECK_THROWS_AS(margin(std::vector<double>{1.0}, 0), ArgumentError);

  // margin > 0 iff the prediction is correct (argmax oracle)
  RandomStream rng(14);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> z{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()};
    const std::size_t y = static_cast<std::size_t>(rng.next_u64() % 3);
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(z.begin(), z.end()) - z.begin());
    if (margin(z, y) > 0.0) {
      CHECK(arg == y);
    } else if (margin(z, y) < 0.0) {
      CHECK(arg != y);
    }
  }
}

TEST_CASE("decide: boundary belongs to ID") {
  CHECK(decide(0.5, 0.5) == Decision::kId);
  CHECK(decide(0.5 - 1e-9, 0.5) == Decision::kOod);
  CHECK(decide(-1e300, -std::numeric_limits<double>::infinity()) == Decision::kId);
}

TEST_CASE("evaluate: oriented energy ranking equals negated raw energy") {
  RandomStream rng(77);
  const Classifier model = Classifier::random_init({2, 8, 3}, rng);
  Matrix xs(5, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    xs(i, 0) = rng.next_gaussian();
    xs(i, 1) = rng.next_gaussian();
  }
  const auto oriented = oriented_scores(model, xs, ScoreConfig::energy());
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(oriented[i] == -score_energy(model, xs.row(i), 1.0));
  }
}
