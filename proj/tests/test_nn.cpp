#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "umood/data.hpp"
#include "umood/masking.hpp"
#include "umood/nn.hpp"

using namespace umood;
namespace fs = std::filesystem;

namespace {

// 2-2-2 network with easy hand-computable values.
Classifier handcrafted_222() {
  Classifier model({2, 2, 2});
  model.layer(0).weight = Matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  model.layer(0).bias = {0.5, -0.25};
  model.layer(1).weight = Matrix(2, 2, {2.0, -1.0, 0.5, 1.0});
  model.layer(1).bias = {0.0, 1.0};
  return model;
}

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

LayerMask all_ones_mask(const Classifier& model) { return gen_mask(model, 1.0, 1); }

}  // namespace

TEST_CASE("forward: hand computation, identity and zero masks") {
  const Classifier model = handcrafted_222();
  const std::vector<double> x{1.0, 0.0};

  // hidden = relu([1*1+0.5, 0*1-0.25]) = [1.5, 0]
  // logits = [2*1.5 - 1*0, 0.5*1.5 + 1*0] + [0, 1] = [3.0, 1.75]
  const auto logits = forward(model, x);
  CHECK(logits[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(logits[1] == doctest::Approx(1.75).epsilon(1e-15));

  // identity mask is bit-exact
  const LayerMask ones = all_ones_mask(model);
  const auto masked = forward(model, x, &ones);
  CHECK(masked[0] == logits[0]);
  CHECK(masked[1] == logits[1]);

  // zero mask leaves only bias propagation
  const LayerMask zeros = gen_mask(model, 0.0, 1);
  const auto bias_only = forward(model, x, &zeros);
  // hidden = relu([0.5, -0.25]) = [0.5, 0]; logits = [0, 1]
  CHECK(bias_only[0] == doctest::Approx(0.0));
  CHECK(bias_only[1] == doctest::Approx(1.0));

  // masking out W1(0,0): hidden = relu([0.5, -0.25]) = [0.5, 0]
  // logits = [2*0.5, 0.5*0.5 + 1] = [1.0, 1.25]
  LayerMask one_out = all_ones_mask(model);
  one_out.per_layer[0](0, 0) = 0.0;
  const auto cut = forward(model, x, &one_out);
  CHECK(cut[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cut[1] == doctest::Approx(1.25).epsilon(1e-15));

  CHECK_THROWS_AS(forward(model, std::vector<double>{1.0}), ArgumentError);
}

TEST_CASE("ce_loss_and_grads: uniform logits give ln C") {
  Classifier model({2, 4, 3});  // zero parameters -> uniform logits
  const LabeledSet batch = random_batch(16, 2, 3, 5);
  const CeGrads g = ce_loss_and_grads(model, batch);
  CHECK(g.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(ce_loss_and_grads(model, LabeledSet{}), ArgumentError);

  LabeledSet bad = batch;
  bad.labels[0] = 3;
  CHECK_THROWS_AS(ce_loss_and_grads(model, bad), ArgumentError);
}

TEST_CASE("ce gradients match central finite differences") {
  RandomStream rng(99);
  Classifier model = Classifier::random_init({2, 3, 2}, rng);
  const LabeledSet batch = random_batch(8, 2, 2, 17);

  const CeGrads analytic = ce_loss_and_grads(model, batch);
  std::vector<double> theta = model.flatten();
  Classifier probe = model;
  auto fn = [&](std::span<const double> t) {
    probe.set_from_flat(t);
    return ce_loss(probe, batch);
  };
  const auto fd = finite_diff_grad(fn, theta, 1e-5);
  CHECK(oracles::rel_err(analytic.grads, fd) <= 1e-6);
}

TEST_CASE("masked-out weights receive exactly zero gradient") {
  RandomStream rng(31);
  Classifier model = Classifier::random_init({2, 4, 2}, rng);
  const LabeledSet batch = random_batch(6, 2, 2, 8);
  const LayerMask mask = gen_mask(model, 0.5, 77);
  const CeGrads g = ce_loss_and_grads(model, batch, &mask);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const Matrix& m = mask.per_layer[l];
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.data()[i] == 0.0) {
        CHECK(g.grads[pos + i] == 0.0);
      }
    }
    pos += m.size() + model.layer(l).bias.size();
  }
}

TEST_CASE("lr_at schedules") {
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.epochs = 100;

  cfg.schedule = Schedule::kCosine;
  CHECK(lr_at(cfg, 0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lr_at(cfg, 50) == doctest::Approx(0.05).epsilon(1e-12));

  cfg.schedule = Schedule::kConstant;
  CHECK(lr_at(cfg, 99) == 0.1);

  cfg.schedule = Schedule::kMultistep;
  CHECK(lr_at(cfg, 0) == doctest::Approx(0.1));
  CHECK(lr_at(cfg, 29) == doctest::Approx(0.1));
  CHECK(lr_at(cfg, 30) == doctest::Approx(0.01));
  CHECK(lr_at(cfg, 60) == doctest::Approx(0.001));

  cfg.schedule = Schedule::kLinear3Phase;
  CHECK(lr_at(cfg, 0) == 0.1);
  CHECK(lr_at(cfg, 33) == 0.1);  // 33 < 100/3
  // midpoint of the middle phase: lr0 * (1 - 0.9 * 0.5)
  CHECK(lr_at(cfg, 50) == doctest::Approx(0.1 * (1.0 - 0.9 * (50.0 - 100.0 / 3.0) / (100.0 / 3.0))));
  CHECK(lr_at(cfg, 99) == doctest::Approx(0.001));  // 1% of lr0 at the last epoch

  CHECK_THROWS_AS(lr_at(cfg, 100), ArgumentError);
}

TEST_CASE("sgd_step algebra") {
  std::vector<double> params{1.0, -2.0};
  const std::vector<double> grads{0.5, 0.25};
  SgdState state;

  SUBCASE("lr zero is a no-op") {
    sgd_step(params, grads, state, 0.0, 0.9, 1e-4);
    CHECK(params[0] == 1.0);
    CHECK(params[1] == -2.0);
  }
  SUBCASE("plain step without momentum or decay") {
    sgd_step(params, grads, state, 0.1, 0.0, 0.0);
    CHECK(params[0] == 1.0 - 0.1 * 0.5);
    CHECK(params[1] == -2.0 - 0.1 * 0.25);
  }
}

TEST_CASE("train: blob data reaches >= 99% accuracy (logistic oracle separable)") {
  const LabeledSet data = gen_gmm({{-3.0, 0.0}, {3.0, 0.0}}, 0.6, {100, 100}, 21);

  // independent oracle: plain logistic regression separates the blobs fully
  {
    double w0 = 0.0, w1 = 0.0, b = 0.0;
    for (int it = 0; it < 4000; ++it) {
      double g0 = 0.0, g1 = 0.0, gb = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double z = w0 * data.features(i, 0) + w1 * data.features(i, 1) + b;
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double t = data.labels[i] == 1 ? 1.0 : 0.0;
        g0 += (p - t) * data.features(i, 0);
        g1 += (p - t) * data.features(i, 1);
        gb += (p - t);
      }
      w0 -= 0.05 * g0 / static_cast<double>(data.size());
      w1 -= 0.05 * g1 / static_cast<double>(data.size());
      b -= 0.05 * gb / static_cast<double>(data.size());
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double z = w0 * data.features(i, 0) + w1 * data.features(i, 1) + b;
      if ((z >= 0.0) == (data.labels[i] == 1)) {
        ++correct;
      }
    }
    REQUIRE(correct == data.size());  // 100%: the blobs are separable
  }

  RandomStream rng(4);
  Classifier model = Classifier::random_init({2, 16, 2}, rng);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 32;
  cfg.lr = 0.05;
  cfg.schedule = Schedule::kCosine;
  cfg.seed = 2;
  const TrainResult result = train(model, data, cfg);
  CHECK(result.record.rows.back().train_acc >= 0.99);
  CHECK(result.per_epoch.size() == 50);
}

TEST_CASE("train: lr zero leaves parameters unchanged; replay is bit-exact") {
  const LabeledSet data = random_batch(32, 2, 2, 3);
  RandomStream rng(8);
  Classifier model = Classifier::random_init({2, 8, 2}, rng);
  const std::vector<double> before = model.flatten();

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.0;
  cfg.schedule = Schedule::kConstant;
  Classifier copy = model;
  train(copy, data, cfg);
  CHECK(copy.flatten() == before);

  cfg.lr = 0.1;
  cfg.epochs = 5;
  cfg.seed = 42;
  Classifier run1 = model;
  Classifier run2 = model;
  const TrainResult r1 = train(run1, data, cfg);
  const TrainResult r2 = train(run2, data, cfg);
  CHECK(r1.per_epoch.back().params == r2.per_epoch.back().params);
}

TEST_CASE("checkpoint round trip and format errors") {
  const fs::path dir = fs::temp_directory_path() / "umood_test_nn";
  fs::create_directories(dir);

  RandomStream rng(15);
  const Classifier model = Classifier::random_init({3, 5, 4, 2}, rng);
  const Checkpoint ckpt = Checkpoint::from(model, 7, 42, 0xDEADBEEF);

  const fs::path path = dir / "model.ckpt";
  save_checkpoint(ckpt, path);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.dims == ckpt.dims);
  CHECK(loaded.params == ckpt.params);  // bit-exact

  SUBCASE("bad magic") {
    const fs::path bad = dir / "bad_magic.ckpt";
    fs::copy_file(path, bad, fs::copy_options::overwrite_existing);
    std::fstream f(bad, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXCKPT9", 7);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("magic"), FormatError);
  }
  SUBCASE("header declares more layers than the payload holds") {
    const fs::path trunc = dir / "trunc.ckpt";
    {
      std::ofstream out(trunc, std::ios::binary);
      out << "UMCKPT1 3 3 5 4 2\n";  // 3 layers declared
      // payload for only 2 layers
      for (int i = 0; i < 3 * 5 + 5 + 5 * 4 + 4; ++i) {
        const double v = 0.25;
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(trunc), doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("checksum mismatch") {
    const fs::path corrupt = dir / "corrupt.ckpt";
    fs::copy_file(path, corrupt, fs::copy_options::overwrite_existing);
    std::fstream f(corrupt, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-12, std::ios::end);  // inside the last parameter word
    char byte = 0;
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x5A);
    f.seekp(-12, std::ios::end);
    f.write(&byte, 1);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(corrupt), doctest::Contains("checksum"), FormatError);
  }
}
