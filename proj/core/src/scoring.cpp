#include "umood/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "umood/metrics.hpp"
#include "umood/util.hpp"

namespace umood {

std::string score_method_name(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::kMsp: return "msp";
    case ScoreMethod::kOdin: return "odin";
    case ScoreMethod::kMahalanobis: return "mahalanobis";
    case ScoreMethod::kEnergy: return "energy";
  }
  throw ArgumentError("score_method_name: unknown method");
}

ScoreMethod parse_score_method(const std::string& name) {
  if (name == "msp") return ScoreMethod::kMsp;
  if (name == "odin") return ScoreMethod::kOdin;
  if (name == "mahalanobis") return ScoreMethod::kMahalanobis;
  if (name == "energy") return ScoreMethod::kEnergy;
  throw ArgumentError("unknown score method '" + name + "'");
}

double score_msp(const Classifier& model, std::span<const double> x, const LayerMask* mask) {
  const std::vector<double> logits = forward(model, x, mask);
  const std::vector<double> p = softmax(logits);
  return *std::max_element(p.begin(), p.end());
}

double score_energy(const Classifier& model, std::span<const double> x, double temperature,
                    const LayerMask* mask) {
  if (!(temperature > 0.0)) {
    throw ArgumentError("score_energy: temperature must be positive");
  }
  std::vector<double> logits = forward(model, x, mask);
  for (double& v : logits) {
    v /= temperature;
  }
  return -temperature * logsumexp(logits);
}

std::vector<double> odin_input_grad(const Classifier& model, std::span<const double> x,
                                    double temperature, const LayerMask* mask) {
  if (!(temperature > 0.0)) {
    throw ArgumentError("odin_input_grad: temperature must be positive");
  }
  Matrix xs(1, x.size(), std::vector<double>(x.begin(), x.end()));
  auto seed_fn = [&](std::size_t, std::span<const double> logits, std::span<double> seed) {
    // d/dz log softmax(z/T)_{c*} = (1[c = c*] - softmax(z/T)_c) / T
    std::vector<double> scaled(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
      scaled[c] = logits[c] / temperature;
    }
    const std::vector<double> p = softmax(scaled);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
      if (logits[c] > logits[arg]) {
        arg = c;
      }
    }
    for (std::size_t c = 0; c < logits.size(); ++c) {
      seed[c] = -p[c] / temperature;
    }
    seed[arg] += 1.0 / temperature;
  };
  ReversePass rp = reverse_pass(model, xs, seed_fn, mask, /*want_input_grads=*/true);
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    grad[i] = rp.input_grads(0, i);
  }
  return grad;
}

double score_odin(const Classifier& model, std::span<const double> x, double temperature,
                  double epsilon, const LayerMask* mask) {
  if (!(temperature > 0.0) || epsilon < 0.0) {
    throw ArgumentError("score_odin: need T > 0 and eps >= 0");
  }
  std::vector<double> point(x.begin(), x.end());
  if (epsilon > 0.0) {
    const std::vector<double> grad = odin_input_grad(model, x, temperature, mask);
    for (std::size_t i = 0; i < point.size(); ++i) {
      const double neg = -grad[i];
      const double sgn = neg > 0.0 ? 1.0 : (neg < 0.0 ? -1.0 : 0.0);
      point[i] -= epsilon * sgn;
    }
  }
  std::vector<double> logits = forward(model, point, mask);
  for (double& v : logits) {
    v /= temperature;
  }
  const std::vector<double> p = softmax(logits);
  return *std::max_element(p.begin(), p.end());
}

// ---------------------------------------------------------------------------
// Mahalanobis
// ---------------------------------------------------------------------------

namespace {

// Lower Cholesky; returns false if the matrix is not positive definite.
bool cholesky(const Matrix& a, Matrix& l) {
  const std::size_t n = a.rows();
  l = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = a(i, j);
      for (std::size_t k = 0; k < j; ++k) {
        acc -= l(i, k) * l(j, k);
      }
      if (i == j) {
        if (acc <= 0.0) {
          return false;
        }
        l(i, i) = std::sqrt(acc);
      } else {
        l(i, j) = acc / l(j, j);
      }
    }
  }
  return true;
}

// Squared Mahalanobis distance ||L^-1 diff||^2 by forward substitution.
double mahal_sq(const Matrix& l, std::span<const double> diff) {
  const std::size_t n = diff.size();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = diff[i];
    for (std::size_t k = 0; k < i; ++k) {
      acc -= l(i, k) * z[k];
    }
    z[i] = acc / l(i, i);
  }
  double d2 = 0.0;
  for (double v : z) {
    d2 += v * v;
  }
  return d2;
}

std::size_t resolve_feature_layer(const Classifier& model, std::size_t feature_layer) {
  if (feature_layer == 0) {
    return model.layer_count() - 1;  // penultimate activation
  }
  if (feature_layer == std::numeric_limits<std::size_t>::max()) {
    return model.layer_count();  // logits
  }
  if (feature_layer > model.layer_count()) {
    throw ArgumentError("feature layer out of range");
  }
  return feature_layer;
}

}  // namespace

MahalanobisModel fit_mahalanobis(const Classifier& model, const LabeledSet& id_train,
                                 std::size_t feature_layer, double ridge, const LayerMask* mask) {
  if (id_train.size() == 0) {
    throw ArgumentError("fit_mahalanobis: empty training set");
  }
  const std::size_t layer = resolve_feature_layer(model, feature_layer);
  const std::size_t c_count = model.class_count();

  std::vector<std::size_t> counts(c_count, 0);
  for (int y : id_train.labels) {
    if (y < 0 || y >= static_cast<int>(c_count)) {
      throw ArgumentError("fit_mahalanobis: label out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < c_count; ++c) {
    if (counts[c] < 2) {
      throw ArgumentError("fit_mahalanobis: class " + std::to_string(c) +
                          " needs at least 2 samples");
    }
  }

  std::vector<std::vector<double>> feats(id_train.size());
  for (std::size_t s = 0; s < id_train.size(); ++s) {
    feats[s] = activation_at(model, id_train.features.row(s), layer, mask);
  }
  const std::size_t d = feats.front().size();

  MahalanobisModel out;
  out.feature_layer = layer;
  out.class_means = Matrix(c_count, d);
  for (std::size_t s = 0; s < id_train.size(); ++s) {
    const std::size_t y = static_cast<std::size_t>(id_train.labels[s]);
    for (std::size_t j = 0; j < d; ++j) {
      out.class_means(y, j) += feats[s][j];
    }
  }
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      out.class_means(c, j) /= static_cast<double>(counts[c]);
    }
  }

  out.covariance = Matrix(d, d);
  std::vector<double> diff(d);
  for (std::size_t s = 0; s < id_train.size(); ++s) {
    const std::size_t y = static_cast<std::size_t>(id_train.labels[s]);
    for (std::size_t j = 0; j < d; ++j) {
      diff[j] = feats[s][j] - out.class_means(y, j);
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        out.covariance(i, j) += diff[i] * diff[j];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(id_train.size());
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      out.covariance(i, j) *= inv_n;
      out.covariance(j, i) = out.covariance(i, j);
    }
  }

  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    trace += out.covariance(i, i);
  }
  out.ridge = ridge >= 0.0 ? ridge : 1e-6 * trace / static_cast<double>(d);

  Matrix ridged = out.covariance;
  for (std::size_t i = 0; i < d; ++i) {
    ridged(i, i) += out.ridge;
  }
  if (!cholesky(ridged, out.chol)) {
    throw NumericError("fit_mahalanobis: covariance singular after ridge " +
                       format_double(out.ridge) + "; increase the ridge");
  }
  return out;
}

double score_mahalanobis(const MahalanobisModel& mahal, const Classifier& model,
                         std::span<const double> x, const LayerMask* mask) {
  const std::vector<double> f = activation_at(model, x, mahal.feature_layer, mask);
  if (f.size() != mahal.class_means.cols()) {
    throw ArgumentError("score_mahalanobis: feature dimension mismatch");
  }
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> diff(f.size());
  for (std::size_t c = 0; c < mahal.class_means.rows(); ++c) {
    for (std::size_t j = 0; j < f.size(); ++j) {
      diff[j] = f[j] - mahal.class_means(c, j);
    }
    best = std::max(best, -mahal_sq(mahal.chol, diff));
  }
  return best;
}

double margin(std::span<const double> logits, std::size_t label) {
  if (logits.size() < 2) {
    throw ArgumentError("margin: need at least 2 classes");
  }
  if (label >= logits.size()) {
    throw ArgumentError("margin: label out of range");
  }
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != label) {
      best_other = std::max(best_other, logits[j]);
    }
  }
  return logits[label] - best_other;
}

Decision decide(double score, double lambda) {
  return score >= lambda ? Decision::kId : Decision::kOod;
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

std::vector<double> oriented_scores(const Classifier& model, const Matrix& xs,
                                    const ScoreConfig& config, const MahalanobisModel* mahal,
                                    const LayerMask* mask) {
  std::vector<double> out;
  out.reserve(xs.rows());
  for (std::size_t s = 0; s < xs.rows(); ++s) {
    const auto row = xs.row(s);
    switch (config.method) {
      case ScoreMethod::kMsp:
        out.push_back(score_msp(model, row, mask));
        break;
      case ScoreMethod::kOdin:
        out.push_back(score_odin(model, row, config.temperature, config.epsilon, mask));
        break;
      case ScoreMethod::kEnergy:
        out.push_back(-score_energy(model, row, config.temperature, mask));
        break;
      case ScoreMethod::kMahalanobis:
        if (mahal == nullptr) {
          throw ArgumentError("oriented_scores: Mahalanobis model not fitted");
        }
        out.push_back(score_mahalanobis(*mahal, model, row, mask));
        break;
    }
  }
  return out;
}

namespace {

std::optional<MahalanobisModel> maybe_fit_mahalanobis(const Classifier& model,
                                                      const EvalSpec& spec,
                                                      const LayerMask* mask) {
  for (const ScoreConfig& cfg : spec.methods) {
    if (cfg.method == ScoreMethod::kMahalanobis) {
      if (spec.id_train == nullptr) {
        throw ArgumentError("evaluate: Mahalanobis requires id_train");
      }
      return fit_mahalanobis(model, *spec.id_train, cfg.feature_layer, cfg.ridge, mask);
    }
  }
  return std::nullopt;
}

}  // namespace

EvalResult evaluate(const Classifier& model, const EvalSpec& spec, const LayerMask* mask) {
  if (spec.id_test == nullptr || spec.ood_test == nullptr) {
    throw ArgumentError("evaluate: id_test and ood_test are required");
  }
  const std::optional<MahalanobisModel> mahal = maybe_fit_mahalanobis(model, spec, mask);

  EvalResult result;
  result.id_acc = id_acc(model, *spec.id_test, mask);
  for (const ScoreConfig& cfg : spec.methods) {
    ScoredSet set;
    set.id_scores = oriented_scores(model, spec.id_test->features, cfg,
                                    mahal ? &*mahal : nullptr, mask);
    set.ood_scores = oriented_scores(model, spec.ood_test->features, cfg,
                                     mahal ? &*mahal : nullptr, mask);
    MethodMetrics m;
    m.method = score_method_name(cfg.method);
    m.fpr95 = fpr_at_tpr(set, 0.95);
    m.auroc = auroc(set);
    m.aupr = aupr(set);
    result.per_method.push_back(std::move(m));
  }
  return result;
}

void write_scores_csv(const Classifier& model, const EvalSpec& spec,
                      const std::filesystem::path& path, const LayerMask* mask) {
  if (spec.id_test == nullptr || spec.ood_test == nullptr) {
    throw ArgumentError("write_scores_csv: id_test and ood_test are required");
  }
  const std::optional<MahalanobisModel> mahal = maybe_fit_mahalanobis(model, spec, mask);

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("write_scores_csv: cannot open " + path.string());
  }
  out << "# umood-scores v1; orientation: larger => ID (energy column is -S_Energy)\n";
  for (const ScoreConfig& cfg : spec.methods) {
    out << "# " << score_method_name(cfg.method) << ": T=" << format_double(cfg.temperature)
        << " eps=" << format_double(cfg.epsilon) << " ridge=" << format_double(cfg.ridge) << '\n';
  }
  out << "sample_id,split,method,score\n";
  for (const ScoreConfig& cfg : spec.methods) {
    const std::string name = score_method_name(cfg.method);
    const std::vector<double> id_s = oriented_scores(model, spec.id_test->features, cfg,
                                                     mahal ? &*mahal : nullptr, mask);
    const std::vector<double> ood_s = oriented_scores(model, spec.ood_test->features, cfg,
                                                      mahal ? &*mahal : nullptr, mask);
    for (std::size_t i = 0; i < id_s.size(); ++i) {
      out << i << ",id," << name << ',' << format_double(id_s[i]) << '\n';
    }
    for (std::size_t i = 0; i < ood_s.size(); ++i) {
      out << i << ",ood," << name << ',' << format_double(ood_s[i]) << '\n';
    }
  }
}

}  // namespace umood
