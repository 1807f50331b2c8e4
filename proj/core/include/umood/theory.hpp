#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "umood/numerics.hpp"

namespace umood {

// ---------------------------------------------------------------------------
// Monte-Carlo verification of the Gaussian-mixture sample-complexity story:
// ID data ~ N(mu, sigma^2 I), auxiliary data ~ N(-mu, sigma^2 I), linear
// classifier sign(theta^T x) with theta the averaged difference of the two
// sample sums.
// ---------------------------------------------------------------------------

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct GmmTheorySpec {
  std::size_t dims = 10;
  std::vector<double> mu;       // empty: mu = (signal, 0, ..., 0)
  double signal = 3.0;          // ||mu|| when mu is defaulted
  double sigma = 1.0;
  std::size_t n1 = 50;
  std::size_t n2 = 50;
  double margin_budget = kUnbounded;  // b, aggregating sigma^2(|alpha-delta*|+eps)
  std::size_t trials = 200;
  std::size_t mc_samples = 20000;
  std::uint64_t seed = 1;

  std::vector<double> resolved_mu() const;
};

// theta* = (sum of ID rows - sum of aux rows) / (n1 + n2).
std::vector<double> build_theta_star(const Matrix& id_samples, const Matrix& aux_samples);

// mu^T theta / (sigma ||theta||); scale-invariant in theta.
double cosine_stat(std::span<const double> theta, std::span<const double> mu, double sigma);

// Monte-Carlo FPR: fraction of x ~ N(-mu, sigma^2 I) with theta^T x >= 0,
// plus the binomial standard error sqrt(p(1-p)/n).
struct FprEstimate {
  double fpr = 0.0;
  double stderr_ = 0.0;
};

FprEstimate empirical_fpr(std::span<const double> theta, std::span<const double> mu, double sigma,
                          std::size_t mc_samples, std::uint64_t seed);

// Rejection-sample batches of n2 draws from N(-mu, sigma^2 I) until
// sum_i |2 x_i^T mu| <= n2 * b. The unbounded sentinel accepts the first
// batch. Throws NumericError (suggesting a larger b) once the acceptance
// rate provably falls below 1e-6.
struct ConstrainedSample {
  Matrix samples;          // n2 x d
  double acceptance_rate;  // 1 / attempts
};

ConstrainedSample constrained_aux_sample(std::span<const double> mu, double sigma, std::size_t n2,
                                         double margin_budget, std::uint64_t seed);

// For each budget: draw ID samples, constrained aux samples, build theta*,
// and average the cosine statistic and Monte-Carlo FPR over spec.trials.
struct MarginSweepRow {
  double budget = 0.0;
  double mean_cosine = 0.0;
  double mean_fpr = 0.0;
  double fpr_stderr = 0.0;       // stderr of the mean across trials
  double acceptance_rate = 0.0;  // mean across trials
  std::size_t trials = 0;
};

std::vector<MarginSweepRow> sweep_margin(const GmmTheorySpec& spec,
                                         std::span<const double> budget_grid);

// CSV "b,mean_cosine,mean_fpr,stderr,acceptance_rate,trials".
void write_margin_sweep_csv(std::span<const MarginSweepRow> rows,
                            const std::filesystem::path& path);

// Spearman rank correlation (average ranks on ties). Used to check the
// directional claims of the margin sweep.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace umood
