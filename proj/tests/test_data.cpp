#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "umood/data.hpp"
#include "umood/nn.hpp"

using namespace umood;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "umood_test_data";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("gen_gmm: sigma zero pins samples to the means") {
  const LabeledSet set = gen_gmm({{1.0, -2.0}, {3.0, 4.0}}, 0.0, {3, 2}, 7);
  CHECK(set.size() == 5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(set.features(i, 0) == 1.0);
    CHECK(set.features(i, 1) == -2.0);
    CHECK(set.labels[i] == 0);
  }
  for (std::size_t i = 3; i < 5; ++i) {
    CHECK(set.features(i, 0) == 3.0);
    CHECK(set.labels[i] == 1);
  }
}

TEST_CASE("gen_gmm: deterministic under seed, law of large numbers") {
  const LabeledSet a = gen_gmm({{0.5, -0.5}}, 1.5, {1000}, 11);
  const LabeledSet b = gen_gmm({{0.5, -0.5}}, 1.5, {1000}, 11);
  for (std::size_t i = 0; i < a.features.size(); ++i) {
    CHECK(a.features.data()[i] == b.features.data()[i]);
  }

  const std::size_t n = 100000;
  const double sigma = 2.0;
  const LabeledSet big = gen_gmm({{1.0, -3.0}}, sigma, {n}, 13);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += big.features(i, c);
    }
    mean /= static_cast<double>(n);
    const double expected = c == 0 ? 1.0 : -3.0;
    CHECK(std::abs(mean - expected) <= 4.0 * sigma / std::sqrt(static_cast<double>(n)));
  }

  CHECK_THROWS_AS(gen_gmm({{1.0}, {2.0, 3.0}}, 1.0, {1, 1}, 5), ArgumentError);
  CHECK_THROWS_AS(gen_gmm({}, 1.0, {}, 5), ArgumentError);
}

TEST_CASE("gen_atypical_benchmark: shapes, planting, determinism") {
  AtypicalBenchmarkSpec spec;
  spec.per_class = 100;
  spec.test_per_class = 40;
  spec.ood_count = 90;
  spec.aux_count = 91;
  spec.seed = 3;
  const AtypicalBenchmark bench = gen_atypical_benchmark(spec);

  CHECK(bench.id_train.size() == 300);
  CHECK(bench.id_test.size() == 120);
  CHECK(bench.ood_test.size() == 90);
  CHECK(bench.aux.size() == 91);
  CHECK(bench.planted.size() == 3 * 5);  // rho=0.05 of 100 per class
  CHECK(bench.id_train.class_count == 3);
  for (int y : bench.ood_test.labels) {
    CHECK(y == -1);
  }

  // planted points sit near radius r_atypical, keep their class labels
  for (std::size_t idx : bench.planted) {
    const double x = bench.id_train.features(idx, 0);
    const double y = bench.id_train.features(idx, 1);
    const double r = std::sqrt(x * x + y * y);
    CHECK(r > spec.r_id + 1.0);
    CHECK(r < spec.r_ood - 1.0);
    CHECK(bench.id_train.labels[idx] == static_cast<int>(idx / spec.per_class));
  }

  const AtypicalBenchmark again = gen_atypical_benchmark(spec);
  for (std::size_t i = 0; i < bench.id_train.features.size(); ++i) {
    CHECK(bench.id_train.features.data()[i] == again.id_train.features.data()[i]);
  }
  CHECK(bench.planted == again.planted);
}

TEST_CASE("gen_atypical_benchmark: degenerate rho and invalid specs") {
  AtypicalBenchmarkSpec spec;
  spec.per_class = 50;
  spec.atypical_fraction = 1e-9;  // degenerates to a clean GMM
  const AtypicalBenchmark bench = gen_atypical_benchmark(spec);
  CHECK(bench.planted.empty());

  AtypicalBenchmarkSpec bad = spec;
  bad.r_atypical = 20.0;  // violates r_atyp < r_ood
  CHECK_THROWS_AS(gen_atypical_benchmark(bad), ArgumentError);
  bad = spec;
  bad.atypical_fraction = 0.6;
  CHECK_THROWS_AS(gen_atypical_benchmark(bad), ArgumentError);
  bad = spec;
  bad.sigma_id = 6.0;  // OOD/aux clusters would overlap
  CHECK_THROWS_AS(gen_atypical_benchmark(bad), ArgumentError);
}

TEST_CASE("atypical_split: partition and accuracies") {
  // a model with zero training error on a tiny separable set
  RandomStream rng(5);
  Classifier model({2, 8, 2});
  {
    Classifier init = Classifier::random_init({2, 8, 2}, rng);
    model = init;
  }
  LabeledSet data = gen_gmm({{-4.0, 0.0}, {4.0, 0.0}}, 0.4, {30, 30}, 17);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.schedule = Schedule::kConstant;
  cfg.seed = 1;
  train(model, data, cfg);
  REQUIRE(ce_loss(model, data) < 0.1);

  const AtypicalSplit split = atypical_split(model, data, 10);
  CHECK(split.typical.size() == 10);
  CHECK(split.atypical.size() == 10);
  CHECK(split.typical_accuracy == 1.0);  // lowest-loss samples are all correct

  // disjoint partition of the selected samples
  std::set<std::size_t> seen(split.typical_indices.begin(), split.typical_indices.end());
  for (std::size_t idx : split.atypical_indices) {
    CHECK(seen.insert(idx).second);
  }
  CHECK(seen.size() == 20);

  // selection of n/2 covers every sample exactly once
  const AtypicalSplit half = atypical_split(model, data, 30);
  std::set<std::size_t> all(half.typical_indices.begin(), half.typical_indices.end());
  all.insert(half.atypical_indices.begin(), half.atypical_indices.end());
  CHECK(all.size() == 60);

  CHECK_THROWS_AS(atypical_split(model, data, 31), ArgumentError);
}

TEST_CASE("dataset CSV round trip and parse errors") {
  const fs::path dir = temp_dir();

  const fs::path hand = dir / "hand.csv";
  {
    std::ofstream out(hand);
    out << "# umood-dataset v1, d=2, C=3\n";
    out << "1.5,-2.25,0\n";
    out << "0.125,3,2\n";
  }
  const LabeledSet set = load_csv(hand);
  CHECK(set.size() == 2);
  CHECK(set.dim() == 2);
  CHECK(set.class_count == 3);
  CHECK(set.features(0, 0) == 1.5);
  CHECK(set.features(0, 1) == -2.25);
  CHECK(set.features(1, 0) == 0.125);
  CHECK(set.labels[0] == 0);
  CHECK(set.labels[1] == 2);

  const LabeledSet generated = gen_gmm({{0.1, 0.2}, {-7.0, 0.3}}, 1.0, {20, 20}, 23);
  const fs::path round = dir / "round.csv";
  save_csv(generated, round);
  const LabeledSet loaded = load_csv(round);
  REQUIRE(loaded.size() == generated.size());
  for (std::size_t i = 0; i < generated.features.size(); ++i) {
    CHECK(loaded.features.data()[i] == generated.features.data()[i]);
  }
  CHECK(loaded.labels == generated.labels);

  const fs::path ragged = dir / "ragged.csv";
  {
    std::ofstream out(ragged);
    out << "# umood-dataset v1, d=2, C=2\n";
    out << "1.0,2.0,0\n";
    out << "1.0,0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(ragged), doctest::Contains("row 3"), FormatError);

  const fs::path badlabel = dir / "badlabel.csv";
  {
    std::ofstream out(badlabel);
    out << "# umood-dataset v1, d=1, C=2\n";
    out << "1.0,5\n";
  }
  CHECK_THROWS_AS(load_csv(badlabel), FormatError);

  CHECK_THROWS_AS(load_csv(dir / "missing.csv"), FormatError);

  const fs::path badheader = dir / "badheader.csv";
  {
    std::ofstream out(badheader);
    out << "not a header\n";
  }
  CHECK_THROWS_AS(load_csv(badheader), FormatError);
}
