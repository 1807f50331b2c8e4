#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "umood/numerics.hpp"

using namespace umood;

TEST_CASE("logsumexp analytic values") {
  const std::vector<double> two_zeros{0.0, 0.0};
  CHECK(logsumexp(two_zeros) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const std::vector<double> singleton{5.0};
  CHECK(logsumexp(singleton) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(logsumexp(std::vector<double>{}), ArgumentError);
}

TEST_CASE("logsumexp matches direct extended-precision summation") {
  RandomStream rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(7);
    for (double& x : v) {
      x = 10.0 * rng.next_gaussian();
    }
    long double acc = 0.0L;
    for (double x : v) {
      acc += expl(static_cast<long double>(x));
    }
    const double expected = static_cast<double>(logl(acc));
    CHECK(logsumexp(v) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("logsumexp bounds") {
  RandomStream rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + static_cast<std::size_t>(rng.next_u64() % 12));
    for (double& x : v) {
      x = 50.0 * (rng.next_uniform() - 0.5);
    }
    const double m = *std::max_element(v.begin(), v.end());
    const double lse = logsumexp(v);
    CHECK(lse >= m);
    CHECK(lse <= m + std::log(static_cast<double>(v.size())) + 1e-12);
  }
}

TEST_CASE("softmax analytic values and shift invariance") {
  const std::vector<double> two_zeros{0.0, 0.0};
  auto p = softmax(two_zeros);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));

  const std::vector<double> ln3{std::log(3.0), 0.0};
  p = softmax(ln3);
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));

  CHECK_THROWS_AS(softmax(std::vector<double>{}), ArgumentError);

  RandomStream rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(5);
    for (double& x : v) {
      x = 20.0 * (rng.next_uniform() - 0.5);
    }
    const double shift = 100.0 * (rng.next_uniform() - 0.5);
    std::vector<double> shifted(v);
    for (double& x : shifted) {
      x += shift;
    }
    const auto a = softmax(v);
    const auto b = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] > 0.0);
      CHECK(std::abs(a[i] - b[i]) <= 1e-12);
      sum += a[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("erf reference values") {
  CHECK(umood::erf(0.0) == 0.0);
  // high-precision series value
  CHECK(umood::erf(1.0) == doctest::Approx(0.8427007929497149).epsilon(1e-12));
}

TEST_CASE("erf matches libm within 1e-10 on [-6,6], odd and monotone") {
  double prev = -2.0;
  for (double x = -6.0; x <= 6.0 + 1e-9; x += 0.01) {
    const double got = umood::erf(x);
    CHECK(std::abs(got - std::erf(x)) <= 1e-10);
    CHECK(std::abs(got + umood::erf(-x)) <= 1e-15);
    CHECK(got >= prev);
    prev = got;
  }
}

TEST_CASE("finite_diff_grad") {
  auto quadratic = [](std::span<const double> t) {
    double s = 0.0;
    for (double v : t) {
      s += 0.5 * v * v;
    }
    return s;
  };
  const std::vector<double> theta{1.0, 2.0};
  const auto g = finite_diff_grad(quadratic, theta, 1e-5);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(g[1] == doctest::Approx(2.0).epsilon(1e-9));

  auto constant = [](std::span<const double>) { return 3.0; };
  const auto gz = finite_diff_grad(constant, theta, 1e-5);
  CHECK(gz[0] == 0.0);
  CHECK(gz[1] == 0.0);

  auto bad = [](std::span<const double> t) { return t[1] > 2.0 ? std::nan("") : 0.0; };
  CHECK_THROWS_WITH_AS(finite_diff_grad(bad, theta, 1e-3),
                       doctest::Contains("coordinate 1"), NumericError);
  CHECK_THROWS_AS(finite_diff_grad(quadratic, theta, 0.0), ArgumentError);
}

TEST_CASE("RandomStream determinism and key-splitting") {
  RandomStream a(12345);
  RandomStream b(12345);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }

  RandomStream base(9);
  RandomStream c0 = base.child(0);
  RandomStream c1 = base.child(1);
  CHECK(c0.next_u64() != c1.next_u64());

  // child derivation is independent of parent draw position
  RandomStream base2(9);
  base2.next_u64();
  CHECK(base2.child(0).next_u64() == base.child(0).next_u64());

  RandomStream g1(77), g2(77);
  for (int i = 0; i < 100; ++i) {
    CHECK(g1.next_gaussian() == g2.next_gaussian());
  }

  RandomStream p1(5), p2(5);
  CHECK(p1.permutation(100) == p2.permutation(100));
}

TEST_CASE("RandomStream uniform and gaussian sanity") {
  RandomStream rng(2024);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double g = rng.next_gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("Matrix constructor invariants") {
  CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ArgumentError);
  CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), ArgumentError);
  CHECK_THROWS_AS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}), ArgumentError);
  const Matrix m(2, 3);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.size() == 6);
}
