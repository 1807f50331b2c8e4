#include "umood/masking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "umood/util.hpp"

namespace umood {

std::size_t LayerMask::retained(std::size_t l) const {
  const auto d = per_layer[l].data();
  return static_cast<std::size_t>(std::count(d.begin(), d.end(), 1.0));
}

std::size_t LayerMask::retained_total() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    n += retained(l);
  }
  return n;
}

std::size_t LayerMask::weight_count() const {
  std::size_t n = 0;
  for (const Matrix& m : per_layer) {
    n += m.size();
  }
  return n;
}

Matrix top_k_mask(const Matrix& scores, std::size_t k) {
  if (k > scores.size()) {
    throw ArgumentError("top_k_mask: k exceeds score count");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto d = scores.data();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) {
      return d[a] > d[b];
    }
    return a < b;  // ties: lower flat index retained first
  });
  Matrix mask(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < k; ++i) {
    mask.data()[order[i]] = 1.0;
  }
  return mask;
}

LayerMask mask_from_scores(std::vector<Matrix> scores, double keep_fraction, std::uint64_t seed) {
  if (keep_fraction < 0.0 || keep_fraction > 1.0) {
    throw ArgumentError("mask_from_scores: keep fraction outside [0, 1]");
  }
  LayerMask mask;
  mask.seed = seed;
  for (Matrix& s : scores) {
    const std::size_t k =
        static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(s.size())));
    mask.per_layer.push_back(top_k_mask(s, k));
    mask.keep_fraction.push_back(keep_fraction);
  }
  mask.scores = std::move(scores);
  return mask;
}

LayerMask gen_mask(const Classifier& model, double delta_keep, std::uint64_t seed) {
  if (delta_keep < 0.0 || delta_keep > 1.0) {
    throw ArgumentError("gen_mask: delta_keep outside [0, 1]");
  }
  RandomStream rng(seed);
  std::vector<Matrix> scores;
  scores.reserve(model.layer_count());
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const Matrix& w = model.layer(l).weight;
    Matrix s(w.rows(), w.cols());
    for (double& v : s.data()) {
      v = rng.next_gaussian();  // N(0,1); only the rank order matters
    }
    scores.push_back(std::move(s));
  }
  return mask_from_scores(std::move(scores), delta_keep, seed);
}

ForgettingConstraint estimate_constraint(const Classifier& model, const LayerMask& mask,
                                         const LabeledSet& data) {
  if (data.size() == 0) {
    throw ArgumentError("estimate_constraint: empty data");
  }
  ForgettingConstraint fc;
  fc.value = ce_loss(model, data, &mask);
  fc.delta = mask.keep_fraction.empty() ? 1.0 : mask.keep_fraction.front();
  fc.dataset_size = data.size();
  fc.seed = mask.seed;
  fc.mask = mask;
  return fc;
}

std::vector<ProbeReport> probe_sweep(const Classifier& model,
                                     std::span<const double> delta_grid, const LabeledSet& data,
                                     std::uint64_t seed) {
  for (double d : delta_grid) {
    if (!(d > 0.0) || d > 1.0) {
      throw ArgumentError("probe_sweep: grid values must lie in (0, 1]");
    }
  }
  RandomStream base(seed);
  std::vector<ProbeReport> reports;
  reports.reserve(delta_grid.size());
  for (std::size_t i = 0; i < delta_grid.size(); ++i) {
    const LayerMask mask = gen_mask(model, delta_grid[i], base.child(i).seed());
    const Matrix logits = forward_batch(model, data.features, &mask);
    ProbeReport rep;
    rep.delta = delta_grid[i];
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
      const auto row = logits.row(s);
      loss += logsumexp(row) - row[static_cast<std::size_t>(data.labels[s])];
      std::size_t arg = 0;
      for (std::size_t c = 1; c < row.size(); ++c) {
        if (row[c] > row[arg]) {
          arg = c;
        }
      }
      if (static_cast<int>(arg) == data.labels[s]) {
        ++correct;
      } else {
        rep.misclassified.push_back(s);
      }
    }
    rep.loss = loss / static_cast<double>(data.size());
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    reports.push_back(std::move(rep));
  }
  return reports;
}

void write_probe_csv(std::span<const ProbeReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("write_probe_csv: cannot open " + path.string());
  }
  out << "delta,loss,accuracy,n_misclassified\n";
  for (const ProbeReport& r : reports) {
    out << format_double(r.delta) << ',' << format_double(r.loss) << ','
        << format_double(r.accuracy) << ',' << r.misclassified.size() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Mask file I/O (bit-packed, LSB-first within each byte)
// ---------------------------------------------------------------------------

void save_mask(const LayerMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("save_mask: cannot open " + path.string());
  }
  out << "UMMASK1 " << mask.layer_count();
  for (const Matrix& m : mask.per_layer) {
    out << ' ' << m.rows() << ' ' << m.cols();
  }
  out << '\n';
  for (const Matrix& m : mask.per_layer) {
    const std::size_t n = m.size();
    std::vector<unsigned char> bytes((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (m.data()[i] == 1.0) {
        bytes[i >> 3] |= static_cast<unsigned char>(1u << (i & 7));
      }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) {
    throw FormatError("save_mask: write failure on " + path.string());
  }
}

LayerMask load_mask(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("load_mask: cannot open " + path.string());
  }
  std::string header;
  if (!std::getline(in, header)) {
    throw FormatError("load_mask: missing header in " + path.string());
  }
  std::istringstream hs(header);
  std::string magic;
  hs >> magic;
  if (magic != "UMMASK1") {
    throw FormatError("load_mask: bad magic in " + path.string());
  }
  long long layers = -1;
  if (!(hs >> layers) || layers < 1) {
    throw FormatError("load_mask: bad layer count in " + path.string());
  }
  LayerMask mask;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for (long long l = 0; l < layers; ++l) {
    long long r = -1, c = -1;
    if (!(hs >> r >> c) || r < 1 || c < 1) {
      throw FormatError("load_mask: bad shape list in " + path.string());
    }
    shapes.emplace_back(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  }
  for (const auto& [rows, cols] : shapes) {
    const std::size_t n = rows * cols;
    std::vector<unsigned char> bytes((n + 7) / 8, 0);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
      throw FormatError("load_mask: truncated payload in " + path.string());
    }
    Matrix m(rows, cols);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((bytes[i >> 3] >> (i & 7)) & 1u) {
        m.data()[i] = 1.0;
        ++kept;
      }
    }
    mask.keep_fraction.push_back(static_cast<double>(kept) / static_cast<double>(n));
    mask.per_layer.push_back(std::move(m));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw FormatError("load_mask: trailing bytes in " + path.string());
  }
  return mask;
}

}  // namespace umood
