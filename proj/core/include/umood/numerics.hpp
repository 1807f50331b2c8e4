#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "umood/error.hpp"

namespace umood {

// ---------------------------------------------------------------------------
// Matrix: dense row-major 64-bit real matrix. Constructors reject non-finite
// entries; everything downstream can assume finite data.
// ---------------------------------------------------------------------------
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// RandomStream: counter-based deterministic generator, stable across
// platforms. Draw i is splitmix64's finalizer applied to
// key + (i+1) * 0x9E3779B97F4A7C15 (the golden-ratio gamma), so a stream is a
// pure function of (key, counter). Child streams are derived by key-splitting
// (never by sequential reuse): child(k) has key
// mix64(key ^ 0xD1B54A32D192ED03 * (k+1)).
//
// Uniform doubles take the top 53 bits: (u >> 11) * 2^-53, in [0, 1).
// Gaussians use the Box-Muller transform (polar angle form) with the spare
// value cached, so one stream yields the same Gaussian sequence everywhere.
// ---------------------------------------------------------------------------
class RandomStream {
 public:
  static constexpr const char* kAlgorithm = "splitmix64-counter-v1";

  explicit RandomStream(std::uint64_t seed) : key_(seed) {}

  std::uint64_t seed() const { return key_; }

  std::uint64_t next_u64();
  double next_uniform();   // [0, 1)
  double next_gaussian();  // standard normal

  // Independent stream for subtask k; safe to use in parallel with parent.
  RandomStream child(std::uint64_t k) const;

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Elementary functions
// ---------------------------------------------------------------------------

// log(sum_i exp(v_i)), computed shift-stably (max subtracted first).
// Throws ArgumentError on an empty vector.
double logsumexp(std::span<const double> v);

// Softmax probabilities; entries positive, sum to 1 within 1e-12,
// shift-invariant. Throws ArgumentError on an empty vector.
std::vector<double> softmax(std::span<const double> v);

// Error function, |abs error| <= 1e-10 on [-6, 6].
//
// For |x| < 3 the all-positive-terms confluent series is used:
//   erf(x) = (2/sqrt(pi)) * x * exp(-x^2) * sum_{n>=0} (2x^2)^n / (2n+1)!!
// with 2/sqrt(pi) = 1.1283791670955126. For 3 <= |x| < 6 the complementary
// function comes from the Legendre continued fraction evaluated by modified
// Lentz iteration:
//   erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(...))))
// For |x| >= 6, erfc < 3e-17 and +-1 is returned.
double erf(double x);

// Central finite differences (fn(theta + h e_i) - fn(theta - h e_i)) / (2h).
// The verification oracle for every analytic gradient in the library.
// Throws NumericError (naming the coordinate) if fn returns a non-finite
// value, and ArgumentError for h <= 0.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> theta, double h);

}  // namespace umood
