#include "umood/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "umood/nn.hpp"
#include "umood/util.hpp"

namespace umood {

LabeledSet LabeledSet::subset(const std::vector<std::size_t>& indices) const {
  LabeledSet out;
  out.features = Matrix(indices.size(), dim());
  out.labels.reserve(indices.size());
  out.class_count = class_count;
  out.tag = tag;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= size()) {
      throw ArgumentError("LabeledSet::subset: index out of range");
    }
    for (std::size_t c = 0; c < dim(); ++c) {
      out.features(r, c) = features(src, c);
    }
    out.labels.push_back(labels[src]);
  }
  return out;
}

LabeledSet gen_gmm(const std::vector<std::vector<double>>& means, double sigma,
                   const std::vector<std::size_t>& counts, std::uint64_t seed) {
  if (means.empty() || means.size() != counts.size()) {
    throw ArgumentError("gen_gmm: means/counts size mismatch");
  }
  const std::size_t d = means.front().size();
  for (const auto& m : means) {
    if (m.size() != d) {
      throw ArgumentError("gen_gmm: inconsistent mean dimensions");
    }
  }
  if (sigma < 0.0) {
    throw ArgumentError("gen_gmm: sigma must be >= 0");
  }
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  LabeledSet set;
  set.features = Matrix(total, d);
  set.labels.reserve(total);
  set.class_count = static_cast<int>(means.size());
  RandomStream rng(seed);
  std::size_t row = 0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i, ++row) {
      for (std::size_t c = 0; c < d; ++c) {
        set.features(row, c) = means[k][c] + sigma * rng.next_gaussian();
      }
      set.labels.push_back(static_cast<int>(k));
    }
  }
  return set;
}

namespace {

std::vector<double> ray_point(double radius, double angle, std::size_t dims) {
  std::vector<double> p(dims, 0.0);
  p[0] = radius * std::cos(angle);
  if (dims > 1) {
    p[1] = radius * std::sin(angle);
  }
  return p;
}

void check_spec(const AtypicalBenchmarkSpec& spec) {
  if (spec.dims < 2 || spec.class_count < 2) {
    throw ArgumentError("AtypicalBenchmarkSpec: need dims >= 2 and K >= 2");
  }
  if (!(spec.r_id < spec.r_atypical && spec.r_atypical < spec.r_ood)) {
    throw ArgumentError("AtypicalBenchmarkSpec: radius ordering r_id < r_atyp < r_ood violated");
  }
  if (spec.atypical_fraction < 0.0 || spec.atypical_fraction >= 0.5) {
    throw ArgumentError("AtypicalBenchmarkSpec: atypical fraction outside [0, 0.5)");
  }
  if (spec.per_class == 0 || spec.test_per_class == 0) {
    throw ArgumentError("AtypicalBenchmarkSpec: empty class");
  }
}

LabeledSet cluster_set(const std::vector<std::vector<double>>& centers, double sigma,
                       std::size_t total, RandomStream rng, LabeledSet::Tag tag) {
  const std::size_t k = centers.size();
  std::vector<std::size_t> counts(k, total / k);
  for (std::size_t i = 0; i < total % k; ++i) {
    ++counts[i];
  }
  const std::size_t d = centers.front().size();
  LabeledSet set;
  set.features = Matrix(total, d);
  set.labels.assign(total, -1);
  set.tag = tag;
  std::size_t row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i, ++row) {
      for (std::size_t j = 0; j < d; ++j) {
        set.features(row, j) = centers[c][j] + sigma * rng.next_gaussian();
      }
    }
  }
  return set;
}

}  // namespace

AtypicalBenchmark gen_atypical_benchmark(const AtypicalBenchmarkSpec& spec) {
  check_spec(spec);
  const std::size_t K = spec.class_count;
  RandomStream base(spec.seed);

  std::vector<std::vector<double>> id_centers, atyp_centers, ood_centers, aux_centers;
  for (std::size_t k = 0; k < K; ++k) {
    const double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(K);
    const double offset = angle + M_PI / static_cast<double>(K);
    id_centers.push_back(ray_point(spec.r_id, angle, spec.dims));
    atyp_centers.push_back(ray_point(spec.r_atypical, angle, spec.dims));
    ood_centers.push_back(ray_point(spec.r_ood, angle, spec.dims));
    aux_centers.push_back(ray_point(spec.r_ood, offset, spec.dims));
  }

  // OOD-test and aux clusters must not overlap; their centers are separated
  // by construction and this guards degenerate K/radius combinations.
  double min_dist = std::numeric_limits<double>::infinity();
  for (const auto& o : ood_centers) {
    for (const auto& a : aux_centers) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < o.size(); ++j) {
        d2 += (o[j] - a[j]) * (o[j] - a[j]);
      }
      min_dist = std::min(min_dist, std::sqrt(d2));
    }
  }
  if (min_dist < 2.0 * spec.sigma_id) {
    throw ArgumentError("gen_atypical_benchmark: OOD/aux cluster centers closer than 2 sigma");
  }

  AtypicalBenchmark bench;
  bench.id_train = gen_gmm(id_centers, spec.sigma_id,
                           std::vector<std::size_t>(K, spec.per_class), base.child(0).seed());
  bench.id_train.tag = LabeledSet::Tag::kIdTrain;

  // Plant atypical points: the first llround(rho*n) rows of each class are
  // redrawn around the class's outward cluster, labels unchanged.
  const std::size_t planted_per_class = static_cast<std::size_t>(
      std::llround(spec.atypical_fraction * static_cast<double>(spec.per_class)));
  RandomStream plant_rng = base.child(1);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < planted_per_class; ++i) {
      const std::size_t row = k * spec.per_class + i;
      for (std::size_t j = 0; j < spec.dims; ++j) {
        bench.id_train.features(row, j) =
            atyp_centers[k][j] + spec.sigma_atypical * plant_rng.next_gaussian();
      }
      bench.planted.push_back(row);
    }
  }

  bench.id_test = gen_gmm(id_centers, spec.sigma_id,
                          std::vector<std::size_t>(K, spec.test_per_class), base.child(2).seed());
  bench.id_test.tag = LabeledSet::Tag::kIdTest;
  bench.ood_test =
      cluster_set(ood_centers, spec.sigma_id, spec.ood_count, base.child(3), LabeledSet::Tag::kOodTest);
  bench.aux =
      cluster_set(aux_centers, spec.sigma_id, spec.aux_count, base.child(4), LabeledSet::Tag::kAux);
  bench.ood_test.class_count = static_cast<int>(K);
  bench.aux.class_count = static_cast<int>(K);
  return bench;
}

AtypicalSplit atypical_split(const Classifier& checkpoint_model, const LabeledSet& data,
                             std::size_t selection_size) {
  if (data.size() == 0) {
    throw ArgumentError("atypical_split: empty data");
  }
  if (selection_size > data.size() / 2) {
    throw ArgumentError("atypical_split: selection size exceeds n/2");
  }
  const Matrix logits = forward_batch(checkpoint_model, data.features);
  std::vector<double> losses(data.size());
  std::vector<bool> correct(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto row = logits.row(s);
    const int y = data.labels[s];
    if (y < 0 || y >= static_cast<int>(checkpoint_model.class_count())) {
      throw ArgumentError("atypical_split: label out of range");
    }
    losses[s] = logsumexp(row) - row[static_cast<std::size_t>(y)];
    std::size_t arg = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[arg]) {
        arg = c;
      }
    }
    correct[s] = static_cast<int>(arg) == y;
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (losses[a] != losses[b]) {
      return losses[a] > losses[b];
    }
    return a < b;
  });

  AtypicalSplit split;
  split.atypical_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(selection_size));
  split.typical_indices.assign(order.end() - static_cast<std::ptrdiff_t>(selection_size), order.end());
  std::reverse(split.typical_indices.begin(), split.typical_indices.end());  // lowest loss first
  split.atypical = data.subset(split.atypical_indices);
  split.atypical.tag = LabeledSet::Tag::kAtypicalMarked;
  split.typical = data.subset(split.typical_indices);

  auto acc_of = [&](const std::vector<std::size_t>& idx) {
    if (idx.empty()) {
      return 0.0;
    }
    std::size_t ok = 0;
    for (std::size_t i : idx) {
      if (correct[i]) {
        ++ok;
      }
    }
    return static_cast<double>(ok) / static_cast<double>(idx.size());
  };
  split.atypical_accuracy = acc_of(split.atypical_indices);
  split.typical_accuracy = acc_of(split.typical_indices);
  return split;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void save_csv(const LabeledSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("save_csv: cannot open " + path.string());
  }
  out << "# umood-dataset v1, d=" << set.dim() << ", C=" << set.class_count << '\n';
  for (std::size_t r = 0; r < set.size(); ++r) {
    for (std::size_t c = 0; c < set.dim(); ++c) {
      out << format_double(set.features(r, c)) << ',';
    }
    out << set.labels[r] << '\n';
  }
}

LabeledSet load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("load_csv: cannot open " + path.string());
  }
  std::string header;
  if (!std::getline(in, header)) {
    throw FormatError("load_csv: empty file " + path.string());
  }
  std::size_t d = 0;
  int c_count = 0;
  {
    std::istringstream hs(header);
    std::string tok;
    if (!(hs >> tok) || tok != "#") {
      throw FormatError("load_csv: bad header in " + path.string());
    }
    std::string rest;
    std::getline(hs, rest);
    const auto dpos = rest.find("d=");
    const auto cpos = rest.find("C=");
    if (rest.find("umood-dataset v1") == std::string::npos || dpos == std::string::npos ||
        cpos == std::string::npos) {
      throw FormatError("load_csv: bad header in " + path.string());
    }
    d = static_cast<std::size_t>(std::stoul(rest.substr(dpos + 2)));
    c_count = std::stoi(rest.substr(cpos + 2));
    if (d == 0) {
      throw FormatError("load_csv: header declares d=0 in " + path.string());
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) {
        break;
      }
      start = comma + 1;
    }
    if (fields.size() != d + 1) {
      throw FormatError("load_csv: row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " columns, expected " +
                        std::to_string(d + 1) + " in " + path.string());
    }
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      const std::string& f = fields[c];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        throw FormatError("load_csv: parse failure at row " + std::to_string(row) + ", column " +
                          std::to_string(c + 1) + " in " + path.string());
      }
      values.push_back(v);
    }
    int label = 0;
    const std::string& f = fields[d];
    const auto res = std::from_chars(f.data(), f.data() + f.size(), label);
    if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
      throw FormatError("load_csv: parse failure at row " + std::to_string(row) + ", column " +
                        std::to_string(d + 1) + " in " + path.string());
    }
    if (label < -1 || label >= c_count) {
      throw FormatError("load_csv: label " + std::to_string(label) + " out of range at row " +
                        std::to_string(row) + " in " + path.string());
    }
    labels.push_back(label);
  }

  LabeledSet set;
  set.features = Matrix(labels.size(), d, std::move(values));
  set.labels = std::move(labels);
  set.class_count = c_count;
  return set;
}

}  // namespace umood
