#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "umood/data.hpp"
#include "umood/numerics.hpp"
#include "umood/runrecord.hpp"

namespace umood {

struct LayerMask;  // masking.hpp

// ---------------------------------------------------------------------------
// Classifier: a small feedforward network, ReLU on hidden layers, identity on
// the output (logits). Layer l maps dims[l] -> dims[l+1] with weight matrix
// W_l (out x in, row-major) and bias b_l. Masks apply to weights only,
// never to biases.
// ---------------------------------------------------------------------------
class Classifier {
 public:
  struct Layer {
    Matrix weight;             // out x in
    std::vector<double> bias;  // out
  };

  Classifier() = default;
  explicit Classifier(std::vector<std::size_t> dims);  // zero parameters

  // Per-layer Gaussian init with std sqrt(2 / fan_in), seeded.
  static Classifier random_init(std::vector<std::size_t> dims, RandomStream& rng);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t class_count() const { return dims_.back(); }

  const Layer& layer(std::size_t l) const { return layers_[l]; }
  Layer& layer(std::size_t l) { return layers_[l]; }

  // Canonical flat parameter layout: W_0 row-major, b_0, W_1, b_1, ...
  // Checkpoints, gradients and optimizer state all use this order.
  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void set_from_flat(std::span<const double> flat);  // no finiteness check (hot path)

 private:
  std::vector<std::size_t> dims_;
  std::vector<Layer> layers_;
};

// Logits for one input; with a mask, each weight is multiplied by its binary
// mask entry before use. Throws ArgumentError on shape mismatch.
std::vector<double> forward(const Classifier& model, std::span<const double> x,
                            const LayerMask* mask = nullptr);

// Logits for a batch (n x d in, n x C out).
Matrix forward_batch(const Classifier& model, const Matrix& xs, const LayerMask* mask = nullptr);

// Hidden activation after `layer` layers (ReLU applied for layer < L,
// logits at layer == L). Used as the Mahalanobis feature extractor.
std::vector<double> activation_at(const Classifier& model, std::span<const double> x,
                                  std::size_t layer, const LayerMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Reverse mode. seed_fn writes dL/dlogits for each sample; the pass returns
// the gradient in canonical flat layout. Weight gradients are taken with
// respect to the EFFECTIVE weights (mask applied on the forward side only);
// callers that follow the chain rule through the mask -- i.e. everything
// except the straight-through score update -- multiply by the mask again via
// ce_loss_and_grads.
// ---------------------------------------------------------------------------
using SeedFn = std::function<void(std::size_t sample, std::span<const double> logits,
                                  std::span<double> seed)>;

struct ReversePass {
  std::vector<double> param_grads;  // canonical flat layout, wrt effective weights
  Matrix input_grads;               // n x d when requested, else empty
  Matrix logits;                    // n x C
};

ReversePass reverse_pass(const Classifier& model, const Matrix& xs, const SeedFn& seed_fn,
                         const LayerMask* mask = nullptr, bool want_input_grads = false);

// Mean cross-entropy loss and its gradient. Masked-out weights receive zero
// gradient. Throws ArgumentError for an empty batch or a label outside
// [0, C).
struct CeGrads {
  double loss = 0.0;
  std::vector<double> grads;  // canonical flat layout
};

CeGrads ce_loss_and_grads(const Classifier& model, const LabeledSet& batch,
                          const LayerMask* mask = nullptr);

// Mean cross-entropy alone (single pass, no gradient).
double ce_loss(const Classifier& model, const LabeledSet& data, const LayerMask* mask = nullptr);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------
enum class Schedule { kCosine, kConstant, kLinear3Phase, kMultistep };

struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  Schedule schedule = Schedule::kCosine;
  std::uint64_t seed = 1;
};

// Learning rate for a 0-based epoch.
//   cosine:   lr0 * (1 + cos(pi * epoch / epochs)) / 2
//   constant: lr0
//   linear-3-phase: lr0 on the first third, then linear through the control
//     points (epochs/3, lr0), (2*epochs/3, lr0/10), (epochs-1, lr0/100)
//   multistep: lr0 * 0.1^floor(epoch / 30)
// Throws ArgumentError when epoch >= epochs.
double lr_at(const TrainConfig& config, std::size_t epoch);

// ---------------------------------------------------------------------------
// Checkpoints. File format (bit-exact):
//   ASCII header "UMCKPT1 <L> <d0> <d1> ... <dL>\n"
//   per layer: weight matrix row-major, then bias vector, as little-endian
//   IEEE-754 64-bit values
//   trailing 8-byte checksum: sum of the payload's raw 64-bit words mod 2^64,
//   little-endian
// ---------------------------------------------------------------------------
struct Checkpoint {
  std::vector<std::size_t> dims;
  std::vector<double> params;  // canonical flat layout
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  Classifier to_classifier() const;
  static Checkpoint from(const Classifier& model, std::size_t epoch = 0, std::uint64_t seed = 0,
                         std::uint64_t config_hash = 0);
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// SGD with Nesterov momentum:
//   g <- grad + weight_decay * theta
//   v <- momentum * v - lr * g
//   theta <- theta + momentum * v - lr * g
// ---------------------------------------------------------------------------
struct SgdState {
  std::vector<double> velocity;
};

void sgd_step(std::span<double> params, std::span<const double> grads, SgdState& state, double lr,
              double momentum, double weight_decay);

// Called once per epoch after the parameter updates; fills the evaluation
// fields of the row (the loop itself fills epoch/loss/objective/train_acc).
using EpochHook =
    std::function<void(std::size_t epoch, const Classifier& model, RunRow& row)>;

struct TrainResult {
  std::vector<Checkpoint> per_epoch;
  RunRecord record;
};

// Minibatch SGD on the cross-entropy objective. Data is reshuffled each epoch
// from the run stream's child(0); weight decay is added to gradients; the
// schedule is applied per epoch. Throws TrainingError (naming the epoch) on a
// non-finite loss.
TrainResult train(Classifier& model, const LabeledSet& data, const TrainConfig& config,
                  const EpochHook& hook = nullptr);

}  // namespace umood
