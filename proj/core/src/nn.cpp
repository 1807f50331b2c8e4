#include "umood/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "umood/masking.hpp"
#include "umood/version.hpp"

namespace umood {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) {
    throw ArgumentError("Classifier: need at least input and output dimensions");
  }
  for (std::size_t d : dims) {
    if (d == 0) {
      throw ArgumentError("Classifier: zero layer dimension");
    }
  }
  if (dims.back() < 2) {
    throw ArgumentError("Classifier: output dimension must be >= 2 classes");
  }
}

void check_mask_shape(const Classifier& model, const LayerMask& mask) {
  if (mask.layer_count() != model.layer_count()) {
    throw ArgumentError("mask layer count " + std::to_string(mask.layer_count()) +
                        " != model layer count " + std::to_string(model.layer_count()));
  }
  for (std::size_t l = 0; l < mask.layer_count(); ++l) {
    if (!mask.per_layer[l].same_shape(model.layer(l).weight)) {
      throw ArgumentError("mask shape mismatch at layer " + std::to_string(l));
    }
  }
}

// W .* M per layer; with no mask the original weights are referenced.
std::vector<Matrix> effective_weights(const Classifier& model, const LayerMask* mask) {
  std::vector<Matrix> eff;
  eff.reserve(model.layer_count());
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const Matrix& w = model.layer(l).weight;
    if (mask == nullptr) {
      eff.push_back(w);
      continue;
    }
    const Matrix& m = mask->per_layer[l];
    Matrix e(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.size(); ++i) {
      e.data()[i] = w.data()[i] * m.data()[i];
    }
    eff.push_back(std::move(e));
  }
  return eff;
}

// z = W a + b
void affine(const Matrix& w, std::span<const double> a, std::span<const double> b,
            std::span<double> z) {
  for (std::size_t o = 0; o < w.rows(); ++o) {
    double acc = b[o];
    const double* wr = w.data().data() + o * w.cols();
    for (std::size_t i = 0; i < w.cols(); ++i) {
      acc += wr[i] * a[i];
    }
    z[o] = acc;
  }
}

}  // namespace

Classifier::Classifier(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  layers_.reserve(dims_.size() - 1);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    layers_.push_back(Layer{Matrix(dims_[l + 1], dims_[l]), std::vector<double>(dims_[l + 1], 0.0)});
  }
}

Classifier Classifier::random_init(std::vector<std::size_t> dims, RandomStream& rng) {
  Classifier model(std::move(dims));
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    Matrix& w = model.layers_[l].weight;
    const double std_dev = std::sqrt(2.0 / static_cast<double>(w.cols()));
    for (double& v : w.data()) {
      v = std_dev * rng.next_gaussian();
    }
    // biases start at zero
  }
  return model;
}

std::size_t Classifier::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) {
    n += l.weight.size() + l.bias.size();
  }
  return n;
}

std::vector<double> Classifier::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const Layer& l : layers_) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void Classifier::set_from_flat(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw ArgumentError("set_from_flat: expected " + std::to_string(param_count()) +
                        " parameters, got " + std::to_string(flat.size()));
  }
  std::size_t pos = 0;
  for (Layer& l : layers_) {
    std::copy_n(flat.begin() + pos, l.weight.size(), l.weight.data().begin());
    pos += l.weight.size();
    std::copy_n(flat.begin() + pos, l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

std::vector<double> forward(const Classifier& model, std::span<const double> x,
                            const LayerMask* mask) {
  return activation_at(model, x, model.layer_count(), mask);
}

std::vector<double> activation_at(const Classifier& model, std::span<const double> x,
                                  std::size_t layer, const LayerMask* mask) {
  if (x.size() != model.input_dim()) {
    throw ArgumentError("forward: input dimension " + std::to_string(x.size()) +
                        " != model input " + std::to_string(model.input_dim()));
  }
  if (layer == 0 || layer > model.layer_count()) {
    throw ArgumentError("activation_at: layer out of range");
  }
  if (mask != nullptr) {
    check_mask_shape(model, *mask);
  }
  const std::vector<Matrix> eff = effective_weights(model, mask);
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> z;
  for (std::size_t l = 0; l < layer; ++l) {
    z.assign(eff[l].rows(), 0.0);
    affine(eff[l], a, model.layer(l).bias, z);
    if (l + 1 < model.layer_count()) {
      for (double& v : z) {
        v = v > 0.0 ? v : 0.0;
      }
    }
    a.swap(z);
  }
  return a;
}

Matrix forward_batch(const Classifier& model, const Matrix& xs, const LayerMask* mask) {
  if (xs.cols() != model.input_dim()) {
    throw ArgumentError("forward_batch: input dimension mismatch");
  }
  if (mask != nullptr) {
    check_mask_shape(model, *mask);
  }
  const std::vector<Matrix> eff = effective_weights(model, mask);
  const std::size_t L = model.layer_count();
  Matrix logits(xs.rows(), model.class_count());
  std::vector<double> a;
  std::vector<double> z;
  for (std::size_t s = 0; s < xs.rows(); ++s) {
    const auto row = xs.row(s);
    a.assign(row.begin(), row.end());
    for (std::size_t l = 0; l < L; ++l) {
      z.assign(eff[l].rows(), 0.0);
      affine(eff[l], a, model.layer(l).bias, z);
      if (l + 1 < L) {
        for (double& v : z) {
          v = v > 0.0 ? v : 0.0;
        }
      }
      a.swap(z);
    }
    for (std::size_t c = 0; c < a.size(); ++c) {
      logits(s, c) = a[c];
    }
  }
  return logits;
}

// ---------------------------------------------------------------------------
// Reverse mode
// ---------------------------------------------------------------------------

ReversePass reverse_pass(const Classifier& model, const Matrix& xs, const SeedFn& seed_fn,
                         const LayerMask* mask, bool want_input_grads) {
  if (xs.cols() != model.input_dim()) {
    throw ArgumentError("reverse_pass: input dimension mismatch");
  }
  if (mask != nullptr) {
    check_mask_shape(model, *mask);
  }
  const std::vector<Matrix> eff = effective_weights(model, mask);
  const std::size_t L = model.layer_count();

  ReversePass out;
  out.param_grads.assign(model.param_count(), 0.0);
  out.logits = Matrix(xs.rows(), model.class_count());
  if (want_input_grads) {
    out.input_grads = Matrix(xs.rows(), xs.cols());
  }

  // flat offsets of each layer's weight/bias block
  std::vector<std::size_t> w_off(L), b_off(L);
  {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < L; ++l) {
      w_off[l] = pos;
      pos += model.layer(l).weight.size();
      b_off[l] = pos;
      pos += model.layer(l).bias.size();
    }
  }

  std::vector<std::vector<double>> acts(L + 1);   // a_0 = x .. a_L = logits
  std::vector<std::vector<double>> preact(L + 1); // z_1 .. z_L (index by layer out)
  std::vector<double> seed(model.class_count());
  std::vector<double> delta;
  std::vector<double> prev;

  for (std::size_t s = 0; s < xs.rows(); ++s) {
    const auto row = xs.row(s);
    acts[0].assign(row.begin(), row.end());
    for (std::size_t l = 0; l < L; ++l) {
      preact[l + 1].assign(eff[l].rows(), 0.0);
      affine(eff[l], acts[l], model.layer(l).bias, preact[l + 1]);
      acts[l + 1] = preact[l + 1];
      if (l + 1 < L) {
        for (double& v : acts[l + 1]) {
          v = v > 0.0 ? v : 0.0;
        }
      }
    }
    for (std::size_t c = 0; c < acts[L].size(); ++c) {
      out.logits(s, c) = acts[L][c];
    }

    seed_fn(s, acts[L], seed);
    delta.assign(seed.begin(), seed.end());

    for (std::size_t l = L; l-- > 0;) {
      double* gw = out.param_grads.data() + w_off[l];
      double* gb = out.param_grads.data() + b_off[l];
      const Matrix& w = eff[l];
      const std::vector<double>& a = acts[l];
      for (std::size_t o = 0; o < w.rows(); ++o) {
        const double d = delta[o];
        gb[o] += d;
        double* gww = gw + o * w.cols();
        for (std::size_t i = 0; i < w.cols(); ++i) {
          gww[i] += d * a[i];
        }
      }
      if (l == 0 && !want_input_grads) {
        break;
      }
      prev.assign(w.cols(), 0.0);
      for (std::size_t o = 0; o < w.rows(); ++o) {
        const double d = delta[o];
        const double* wr = w.data().data() + o * w.cols();
        for (std::size_t i = 0; i < w.cols(); ++i) {
          prev[i] += wr[i] * d;
        }
      }
      if (l > 0) {
        // ReLU subgradient: 0 at the kink
        for (std::size_t i = 0; i < prev.size(); ++i) {
          if (preact[l][i] <= 0.0) {
            prev[i] = 0.0;
          }
        }
        delta.swap(prev);
      } else {
        for (std::size_t i = 0; i < prev.size(); ++i) {
          out.input_grads(s, i) = prev[i];
        }
      }
    }
  }
  return out;
}

CeGrads ce_loss_and_grads(const Classifier& model, const LabeledSet& batch,
                          const LayerMask* mask) {
  if (batch.size() == 0) {
    throw ArgumentError("ce_loss_and_grads: empty batch");
  }
  const int c_count = static_cast<int>(model.class_count());
  for (int y : batch.labels) {
    if (y < 0 || y >= c_count) {
      throw ArgumentError("ce_loss_and_grads: label out of range [0, C)");
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  auto seed_fn = [&](std::size_t s, std::span<const double> logits, std::span<double> seed) {
    const double lse = logsumexp(logits);
    const int y = batch.labels[s];
    loss += (lse - logits[static_cast<std::size_t>(y)]) * inv_n;
    for (std::size_t c = 0; c < logits.size(); ++c) {
      seed[c] = std::exp(logits[c] - lse) * inv_n;
    }
    seed[static_cast<std::size_t>(y)] -= inv_n;
  };
  ReversePass rp = reverse_pass(model, batch.features, seed_fn, mask);

  if (mask != nullptr) {
    // chain rule through the mask: masked-out weights get exactly zero gradient
    std::size_t pos = 0;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
      const Matrix& m = mask->per_layer[l];
      for (std::size_t i = 0; i < m.size(); ++i) {
        rp.param_grads[pos + i] *= m.data()[i];
      }
      pos += m.size() + model.layer(l).bias.size();
    }
  }
  return CeGrads{loss, std::move(rp.param_grads)};
}

double ce_loss(const Classifier& model, const LabeledSet& data, const LayerMask* mask) {
  if (data.size() == 0) {
    throw ArgumentError("ce_loss: empty data");
  }
  const Matrix logits = forward_batch(model, data.features, mask);
  double loss = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const int y = data.labels[s];
    if (y < 0 || y >= static_cast<int>(model.class_count())) {
      throw ArgumentError("ce_loss: label out of range [0, C)");
    }
    const auto row = logits.row(s);
    loss += logsumexp(row) - row[static_cast<std::size_t>(y)];
  }
  return loss / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kMultistepPeriod = 30;  // decay to 10% of current every 30 epochs
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
  if (epoch >= config.epochs) {
    throw ArgumentError("lr_at: epoch " + std::to_string(epoch) + " out of range");
  }
  const double e = static_cast<double>(epoch);
  const double total = static_cast<double>(config.epochs);
  switch (config.schedule) {
    case Schedule::kConstant:
      return config.lr;
    case Schedule::kCosine:
      return config.lr * 0.5 * (1.0 + std::cos(M_PI * e / total));
    case Schedule::kLinear3Phase: {
      const double t1 = total / 3.0;
      const double t2 = 2.0 * total / 3.0;
      const double last = total - 1.0;
      if (e < t1) {
        return config.lr;
      }
      if (e < t2) {
        return config.lr * (1.0 - 0.9 * (e - t1) / (t2 - t1));
      }
      if (last <= t2) {
        return 0.01 * config.lr;
      }
      const double f = (e - t2) / (last - t2);
      return config.lr * (0.1 - 0.09 * std::min(f, 1.0));
    }
    case Schedule::kMultistep:
      return config.lr * std::pow(0.1, static_cast<double>(epoch / kMultistepPeriod));
  }
  throw ArgumentError("lr_at: unknown schedule");
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

Classifier Checkpoint::to_classifier() const {
  Classifier model(dims);
  if (params.size() != model.param_count()) {
    throw FormatError("checkpoint parameter count mismatch");
  }
  for (double v : params) {
    if (!std::isfinite(v)) {
      throw FormatError("checkpoint holds non-finite parameters");
    }
  }
  model.set_from_flat(params);
  return model;
}

Checkpoint Checkpoint::from(const Classifier& model, std::size_t epoch, std::uint64_t seed,
                            std::uint64_t config_hash) {
  return Checkpoint{model.dims(), model.flatten(), epoch, seed, config_hash};
}

namespace {

void put_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u64_le(std::istream& in, std::uint64_t& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    return false;
  }
  v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  }
  return true;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (ckpt.dims.size() < 2) {
    throw ArgumentError("save_checkpoint: malformed dims");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("save_checkpoint: cannot open " + path.string());
  }
  out << "UMCKPT1 " << (ckpt.dims.size() - 1);
  for (std::size_t d : ckpt.dims) {
    out << ' ' << d;
  }
  out << '\n';
  std::uint64_t checksum = 0;
  for (double v : ckpt.params) {
    const std::uint64_t word = std::bit_cast<std::uint64_t>(v);
    checksum += word;  // mod 2^64 by wraparound
    put_u64_le(out, word);
  }
  put_u64_le(out, checksum);
  if (!out) {
    throw FormatError("save_checkpoint: write failure on " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("load_checkpoint: cannot open " + path.string());
  }
  std::string header;
  if (!std::getline(in, header)) {
    throw FormatError("load_checkpoint: missing header in " + path.string());
  }
  std::istringstream hs(header);
  std::string magic;
  hs >> magic;
  if (magic != "UMCKPT1") {
    throw FormatError("load_checkpoint: bad magic in " + path.string());
  }
  long long layer_count = -1;
  if (!(hs >> layer_count) || layer_count < 1) {
    throw FormatError("load_checkpoint: bad layer count in " + path.string());
  }
  Checkpoint ckpt;
  for (long long i = 0; i <= layer_count; ++i) {
    long long d = -1;
    if (!(hs >> d) || d < 1) {
      throw FormatError("load_checkpoint: bad dimension list in " + path.string());
    }
    ckpt.dims.push_back(static_cast<std::size_t>(d));
  }
  {
    std::string extra;
    if (hs >> extra) {
      throw FormatError("load_checkpoint: trailing header tokens in " + path.string());
    }
  }
  std::size_t words = 0;
  for (std::size_t l = 0; l + 1 < ckpt.dims.size(); ++l) {
    words += ckpt.dims[l] * ckpt.dims[l + 1] + ckpt.dims[l + 1];
  }
  ckpt.params.reserve(words);
  std::uint64_t checksum = 0;
  for (std::size_t i = 0; i < words; ++i) {
    std::uint64_t word = 0;
    if (!get_u64_le(in, word)) {
      throw FormatError("load_checkpoint: truncated payload in " + path.string() + " (expected " +
                        std::to_string(words) + " words, got " + std::to_string(i) + ")");
    }
    checksum += word;
    ckpt.params.push_back(std::bit_cast<double>(word));
  }
  std::uint64_t stored = 0;
  if (!get_u64_le(in, stored)) {
    throw FormatError("load_checkpoint: missing checksum in " + path.string());
  }
  if (stored != checksum) {
    throw FormatError("load_checkpoint: checksum mismatch in " + path.string());
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw FormatError("load_checkpoint: trailing bytes in " + path.string());
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// SGD / training loop
// ---------------------------------------------------------------------------

void sgd_step(std::span<double> params, std::span<const double> grads, SgdState& state, double lr,
              double momentum, double weight_decay) {
  if (params.size() != grads.size()) {
    throw ArgumentError("sgd_step: parameter/gradient size mismatch");
  }
  if (state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    const double v = momentum * state.velocity[i] - lr * g;
    state.velocity[i] = v;
    params[i] += momentum * v - lr * g;
  }
}

namespace {

void check_train_config(const TrainConfig& config) {
  if (config.lr < 0.0 || !std::isfinite(config.lr)) {
    throw ArgumentError("TrainConfig: learning rate must be finite and >= 0");
  }
  if (config.momentum < 0.0 || config.momentum >= 1.0) {
    throw ArgumentError("TrainConfig: momentum must be in [0, 1)");
  }
  if (config.weight_decay < 0.0) {
    throw ArgumentError("TrainConfig: weight decay must be >= 0");
  }
  if (config.batch_size < 1) {
    throw ArgumentError("TrainConfig: batch size must be >= 1");
  }
  if (config.epochs < 1) {
    throw ArgumentError("TrainConfig: epochs must be >= 1");
  }
}

double batch_accuracy(const Classifier& model, const LabeledSet& data, const LayerMask* mask) {
  const Matrix logits = forward_batch(model, data.features, mask);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto row = logits.row(s);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[arg]) {
        arg = c;  // ties keep the lowest class index
      }
    }
    if (static_cast<int>(arg) == data.labels[s]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TrainResult train(Classifier& model, const LabeledSet& data, const TrainConfig& config,
                  const EpochHook& hook) {
  check_train_config(config);
  if (data.size() == 0) {
    throw ArgumentError("train: empty dataset");
  }
  if (data.dim() != model.input_dim()) {
    throw ArgumentError("train: data dimension mismatch");
  }

  RandomStream run_stream(config.seed);
  RandomStream shuffle_stream = run_stream.child(0);

  std::vector<double> params = model.flatten();
  SgdState opt;
  TrainResult result;
  result.record.seed = config.seed;
  result.record.code_version = kCodeVersion;
  result.record.rng_algorithm = RandomStream::kAlgorithm;

  const std::size_t n = data.size();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const std::vector<std::size_t> perm = shuffle_stream.permutation(n);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                         perm.begin() + static_cast<std::ptrdiff_t>(stop));
      const LabeledSet batch = data.subset(idx);
      const CeGrads g = ce_loss_and_grads(model, batch);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += g.loss;
      ++batches;
      sgd_step(params, g.grads, opt, lr, config.momentum, config.weight_decay);
      model.set_from_flat(params);
    }

    RunRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(batches);
    row.objective = row.train_loss;
    row.train_acc = batch_accuracy(model, data, nullptr);
    if (hook) {
      hook(epoch, model, row);
    }
    result.record.append(std::move(row));
    result.per_epoch.push_back(Checkpoint::from(model, epoch, config.seed));
  }
  return result;
}

}  // namespace umood
