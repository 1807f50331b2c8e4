#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "umood/data.hpp"
#include "umood/masking.hpp"
#include "umood/nn.hpp"

namespace umood {

// ---------------------------------------------------------------------------
// Post-hoc scoring functions over a (possibly masked) classifier.
//
// Orientation convention: the decision rule and every ranking metric consume
// scores where larger => more ID. MSP/ODIN/Mahalanobis already satisfy it;
// raw energy is LOWER for ID, so the oriented energy score is -S_Energy.
// ---------------------------------------------------------------------------

enum class ScoreMethod { kMsp, kOdin, kMahalanobis, kEnergy };

std::string score_method_name(ScoreMethod method);
ScoreMethod parse_score_method(const std::string& name);

struct ScoreConfig {
  ScoreMethod method = ScoreMethod::kEnergy;
  double temperature = 1.0;    // T
  double epsilon = 0.0;        // ODIN input perturbation
  double ridge = -1.0;         // Mahalanobis ridge; < 0 selects 1e-6 * trace(Sigma)/d
  std::size_t feature_layer = 0;  // 0: penultimate activation; L: logits

  static ScoreConfig msp() { return {ScoreMethod::kMsp, 1.0, 0.0, -1.0, 0}; }
  // Suggested ODIN hyperparameters: eps = 1.4e-3, T = 1e4.
  static ScoreConfig odin() { return {ScoreMethod::kOdin, 1.0e4, 1.4e-3, -1.0, 0}; }
  static ScoreConfig energy() { return {ScoreMethod::kEnergy, 1.0, 0.0, -1.0, 0}; }
  static ScoreConfig mahalanobis() { return {ScoreMethod::kMahalanobis, 1.0, 0.0, -1.0, 0}; }
};

// max softmax(f(x)); in (0, 1].
double score_msp(const Classifier& model, std::span<const double> x,
                 const LayerMask* mask = nullptr);

// Raw energy -T * logsumexp(f(x)/T); lower for ID.
double score_energy(const Classifier& model, std::span<const double> x, double temperature,
                    const LayerMask* mask = nullptr);

// Temperature scaling plus a tiny input perturbation that increases the
// temperature-scaled max softmax:
//   x~ = x - eps * sign(-grad_x log max_c softmax(f(x)/T)_c)
// then max softmax(f(x~)/T). With eps = 0 and T = 1 this reduces exactly to
// MSP.
double score_odin(const Classifier& model, std::span<const double> x, double temperature,
                  double epsilon, const LayerMask* mask = nullptr);

// Input gradient of log max_c softmax(f(x)/T)_c (the pre-perturbation ODIN
// objective); exposed for gradient verification.
std::vector<double> odin_input_grad(const Classifier& model, std::span<const double> x,
                                    double temperature, const LayerMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Mahalanobis: class-conditional Gaussians with a tied covariance over a
// chosen feature layer (default: penultimate activation).
// ---------------------------------------------------------------------------
struct MahalanobisModel {
  Matrix class_means;      // C x d_f
  Matrix covariance;       // tied, pre-ridge
  Matrix chol;             // lower Cholesky factor of covariance + ridge*I
  double ridge = 0.0;      // ridge actually applied
  std::size_t feature_layer = 0;
};

// Per-class feature means and tied covariance (class-centered scatter / N)
// from ID training data; ridge*I is added before factorization. Every class
// needs >= 2 samples. Throws NumericError advising a larger ridge when the
// ridged covariance is not positive definite.
MahalanobisModel fit_mahalanobis(const Classifier& model, const LabeledSet& id_train,
                                 std::size_t feature_layer, double ridge,
                                 const LayerMask* mask = nullptr);

// max_c -(f(x) - mu_c)^T Sigma^-1 (f(x) - mu_c); always <= 0.
double score_mahalanobis(const MahalanobisModel& mahal, const Classifier& model,
                         std::span<const double> x, const LayerMask* mask = nullptr);

// f(x)_y - max_{j != y} f(x)_j
double margin(std::span<const double> logits, std::size_t label);

// Eq-1 style decision: ID iff score >= lambda (boundary assigned to ID).
enum class Decision { kId, kOod };
Decision decide(double score, double lambda);

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

// Oriented scores (larger => ID) for every row of xs.
std::vector<double> oriented_scores(const Classifier& model, const Matrix& xs,
                                    const ScoreConfig& config,
                                    const MahalanobisModel* mahal = nullptr,
                                    const LayerMask* mask = nullptr);

struct MethodMetrics {
  std::string method;
  double fpr95 = 0.0;
  double auroc = 0.0;
  double aupr = 0.0;
};

struct EvalSpec {
  const LabeledSet* id_test = nullptr;
  const LabeledSet* ood_test = nullptr;
  const LabeledSet* id_train = nullptr;  // required when Mahalanobis is evaluated
  std::vector<ScoreConfig> methods;
};

struct EvalResult {
  double id_acc = 0.0;
  std::vector<MethodMetrics> per_method;
};

EvalResult evaluate(const Classifier& model, const EvalSpec& spec,
                    const LayerMask* mask = nullptr);

// Scores CSV: "sample_id,split,method,score"; the header comment records the
// orientation and the hyperparameters in use.
void write_scores_csv(const Classifier& model, const EvalSpec& spec,
                      const std::filesystem::path& path, const LayerMask* mask = nullptr);

}  // namespace umood
