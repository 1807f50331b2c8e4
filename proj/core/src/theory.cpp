#include "umood/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "umood/util.hpp"

namespace umood {

std::vector<double> GmmTheorySpec::resolved_mu() const {
  if (!mu.empty()) {
    if (mu.size() != dims) {
      throw ArgumentError("GmmTheorySpec: mu dimension != dims");
    }
    return mu;
  }
  std::vector<double> m(dims, 0.0);
  m[0] = signal;
  return m;
}

std::vector<double> build_theta_star(const Matrix& id_samples, const Matrix& aux_samples) {
  if (id_samples.cols() != aux_samples.cols()) {
    throw ArgumentError("build_theta_star: dimension mismatch");
  }
  if (id_samples.rows() == 0 && aux_samples.rows() == 0) {
    throw ArgumentError("build_theta_star: no samples");
  }
  const std::size_t d = id_samples.cols();
  std::vector<double> theta(d, 0.0);
  for (std::size_t r = 0; r < id_samples.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      theta[c] += id_samples(r, c);
    }
  }
  for (std::size_t r = 0; r < aux_samples.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      theta[c] -= aux_samples(r, c);
    }
  }
  const double inv = 1.0 / static_cast<double>(id_samples.rows() + aux_samples.rows());
  for (double& v : theta) {
    v *= inv;
  }
  return theta;
}

double cosine_stat(std::span<const double> theta, std::span<const double> mu, double sigma) {
  if (theta.size() != mu.size()) {
    throw ArgumentError("cosine_stat: dimension mismatch");
  }
  if (!(sigma > 0.0)) {
    throw ArgumentError("cosine_stat: sigma must be positive");
  }
  double dot = 0.0;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    dot += mu[i] * theta[i];
    norm2 += theta[i] * theta[i];
  }
  if (norm2 == 0.0) {
    throw ArgumentError("cosine_stat: theta must be non-zero");
  }
  return dot / (sigma * std::sqrt(norm2));
}

FprEstimate empirical_fpr(std::span<const double> theta, std::span<const double> mu, double sigma,
                          std::size_t mc_samples, std::uint64_t seed) {
  if (theta.size() != mu.size()) {
    throw ArgumentError("empirical_fpr: dimension mismatch");
  }
  if (mc_samples == 0) {
    throw ArgumentError("empirical_fpr: need at least one sample");
  }
  double norm2 = 0.0;
  for (double v : theta) {
    norm2 += v * v;
  }
  if (norm2 == 0.0) {
    throw ArgumentError("empirical_fpr: theta must be non-zero");
  }
  RandomStream rng(seed);
  std::size_t positive = 0;
  const std::size_t d = theta.size();
  for (std::size_t s = 0; s < mc_samples; ++s) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = -mu[j] + sigma * rng.next_gaussian();
      dot += theta[j] * x;
    }
    if (dot >= 0.0) {
      ++positive;
    }
  }
  const double p = static_cast<double>(positive) / static_cast<double>(mc_samples);
  FprEstimate est;
  est.fpr = p;
  est.stderr_ = std::sqrt(p * (1.0 - p) / static_cast<double>(mc_samples));
  return est;
}

ConstrainedSample constrained_aux_sample(std::span<const double> mu, double sigma, std::size_t n2,
                                         double margin_budget, std::uint64_t seed) {
  if (n2 == 0) {
    throw ArgumentError("constrained_aux_sample: n2 must be >= 1");
  }
  if (margin_budget < 0.0) {
    throw ArgumentError("constrained_aux_sample: budget must be >= 0");
  }
  constexpr std::size_t kMaxAttempts = 1'000'000;  // acceptance < 1e-6 -> infeasible
  RandomStream rng(seed);
  const std::size_t d = mu.size();
  ConstrainedSample out;
  out.samples = Matrix(n2, d);
  for (std::size_t attempt = 1; attempt <= kMaxAttempts; ++attempt) {
    double total = 0.0;
    for (std::size_t r = 0; r < n2; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double x = -mu[c] + sigma * rng.next_gaussian();
        out.samples(r, c) = x;
        dot += x * mu[c];
      }
      total += std::abs(2.0 * dot);
    }
    if (total <= static_cast<double>(n2) * margin_budget) {
      out.acceptance_rate = 1.0 / static_cast<double>(attempt);
      return out;
    }
  }
  throw NumericError("constrained_aux_sample: acceptance rate below 1e-6; increase the margin "
                     "budget b");
}

std::vector<MarginSweepRow> sweep_margin(const GmmTheorySpec& spec,
                                         std::span<const double> budget_grid) {
  if (budget_grid.empty()) {
    throw ArgumentError("sweep_margin: empty budget grid");
  }
  if (spec.trials == 0) {
    throw ArgumentError("sweep_margin: need at least one trial");
  }
  const std::vector<double> mu = spec.resolved_mu();
  RandomStream base(spec.seed);

  std::vector<MarginSweepRow> rows;
  rows.reserve(budget_grid.size());
  for (std::size_t bi = 0; bi < budget_grid.size(); ++bi) {
    const double b = budget_grid[bi];
    RandomStream bstream = base.child(bi);
    double cos_sum = 0.0;
    double fpr_sum = 0.0;
    double fpr_sq_sum = 0.0;
    double acc_sum = 0.0;
    for (std::size_t t = 0; t < spec.trials; ++t) {
      RandomStream tstream = bstream.child(t);
      RandomStream id_rng = tstream.child(0);
      Matrix id_samples(spec.n1, spec.dims);
      for (std::size_t r = 0; r < spec.n1; ++r) {
        for (std::size_t c = 0; c < spec.dims; ++c) {
          id_samples(r, c) = mu[c] + spec.sigma * id_rng.next_gaussian();
        }
      }
      const ConstrainedSample aux =
          constrained_aux_sample(mu, spec.sigma, spec.n2, b, tstream.child(1).seed());
      const std::vector<double> theta = build_theta_star(id_samples, aux.samples);
      cos_sum += cosine_stat(theta, mu, spec.sigma);
      const FprEstimate est =
          empirical_fpr(theta, mu, spec.sigma, spec.mc_samples, tstream.child(2).seed());
      fpr_sum += est.fpr;
      fpr_sq_sum += est.fpr * est.fpr;
      acc_sum += aux.acceptance_rate;
    }
    const double n = static_cast<double>(spec.trials);
    MarginSweepRow row;
    row.budget = b;
    row.mean_cosine = cos_sum / n;
    row.mean_fpr = fpr_sum / n;
    const double var = std::max(0.0, fpr_sq_sum / n - row.mean_fpr * row.mean_fpr);
    row.fpr_stderr = std::sqrt(var / n);
    row.acceptance_rate = acc_sum / n;
    row.trials = spec.trials;
    rows.push_back(row);
  }
  return rows;
}

void write_margin_sweep_csv(std::span<const MarginSweepRow> rows,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("write_margin_sweep_csv: cannot open " + path.string());
  }
  out << "b,mean_cosine,mean_fpr,stderr,acceptance_rate,trials\n";
  for (const MarginSweepRow& r : rows) {
    out << format_double(r.budget) << ',' << format_double(r.mean_cosine) << ','
        << format_double(r.mean_fpr) << ',' << format_double(r.fpr_stderr) << ','
        << format_double(r.acceptance_rate) << ',' << r.trials << '\n';
  }
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      ranks[order[t]] = avg;
    }
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ArgumentError("spearman: need two equal-length series of size >= 2");
  }
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) {
    throw NumericError("spearman: constant series");
  }
  return num / std::sqrt(da * db);
}

}  // namespace umood
