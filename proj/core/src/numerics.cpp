#include "umood/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace umood {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ArgumentError(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw ArgumentError("Matrix: data length " + std::to_string(data_.size()) +
                        " != rows*cols " + std::to_string(rows_ * cols_));
  }
  require_finite(data_, "Matrix");
}

// ---------------------------------------------------------------------------
// RandomStream
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;       // golden-ratio increment
constexpr std::uint64_t kChildDomain = 0xD1B54A32D192ED03ull; // key-split domain constant

// splitmix64 finalizer (Steele, Lea, Flood 2014).
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGamma);
}

double RandomStream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

RandomStream RandomStream::child(std::uint64_t k) const {
  return RandomStream(mix64(key_ ^ (kChildDomain * (k + 1))));
}

std::vector<std::size_t> RandomStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(next_u64() % i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Elementary functions
// ---------------------------------------------------------------------------

double logsumexp(std::span<const double> v) {
  if (v.empty()) {
    throw ArgumentError("logsumexp: empty vector");
  }
  const double m = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) {
    acc += std::exp(x - m);
  }
  return m + std::log(acc);
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) {
    throw ArgumentError("softmax: empty vector");
  }
  const double m = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    acc += out[i];
  }
  for (double& x : out) {
    x /= acc;
  }
  return out;
}

namespace {

constexpr double kTwoOverSqrtPi = 1.1283791670955126;  // 2/sqrt(pi)
constexpr double kOneOverSqrtPi = 0.5641895835477563;  // 1/sqrt(pi)

// erf on |x| < 3 via the all-positive confluent series.
double erf_series(double x) {
  const double x2 = x * x;
  double term = 1.0;  // (2x^2)^n / (2n+1)!!
  double sum = 1.0;
  for (int n = 1; n < 200; ++n) {
    term *= 2.0 * x2 / static_cast<double>(2 * n + 1);
    sum += term;
    if (term < 1e-18 * sum) {
      break;
    }
  }
  return kTwoOverSqrtPi * x * std::exp(-x2) * sum;
}

// erfc on x >= 3 via the Legendre continued fraction, modified Lentz method.
double erfc_cf(double x) {
  const double tiny = 1e-300;
  double f = x;  // b0 = x
  double c = f;
  double d = 0.0;
  for (int n = 1; n < 300; ++n) {
    const double a = 0.5 * static_cast<double>(n);  // a_n = n/2
    const double b = x;                             // b_n = x
    d = b + a * d;
    if (d == 0.0) d = tiny;
    c = b + a / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-17) {
      break;
    }
  }
  return kOneOverSqrtPi * std::exp(-x * x) / f;
}

}  // namespace

double erf(double x) {
  if (!std::isfinite(x)) {
    throw ArgumentError("erf: non-finite argument");
  }
  const double ax = std::abs(x);
  double r;
  if (ax < 3.0) {
    r = erf_series(ax);
  } else if (ax < 6.0) {
    r = 1.0 - erfc_cf(ax);
  } else {
    r = 1.0;  // erfc(6) ~ 2.2e-17, below the 1e-10 budget
  }
  return x < 0.0 ? -r : r;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> theta, double h) {
  if (h <= 0.0) {
    throw ArgumentError("finite_diff_grad: h must be positive");
  }
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = fn(point);
    point[i] = saved - h;
    const double down = fn(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace umood
