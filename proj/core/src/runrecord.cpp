#include "umood/runrecord.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "umood/error.hpp"
#include "umood/util.hpp"

namespace umood {

void RunRecord::write_csv(std::ostream& out) const {
  out << "# " << kSchema << '\n';
  out << "# seed=" << seed << " config_hash=" << config_hash << " code_version=" << code_version
      << " rng=" << rng_algorithm << '\n';
  out << "# orientation: scores larger => ID (energy negated)\n";
  out << "epoch,train_loss,objective,train_acc,id_acc";
  for (const std::string& m : methods) {
    out << ',' << m << "_fpr95," << m << "_auroc," << m << "_aupr";
  }
  out << '\n';
  for (const RunRow& r : rows) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.objective)
        << ',' << format_double(r.train_acc) << ',';
    out << (r.evaluated ? format_double(r.id_acc) : "nan");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const double f = r.evaluated && m < r.fpr95.size() ? r.fpr95[m] : nan;
      const double a = r.evaluated && m < r.auroc.size() ? r.auroc[m] : nan;
      const double p = r.evaluated && m < r.aupr.size() ? r.aupr[m] : nan;
      out << ',' << format_double(f) << ',' << format_double(a) << ',' << format_double(p);
    }
    out << '\n';
  }
}

void RunRecord::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("RunRecord::save: cannot open " + path.string());
  }
  write_csv(out);
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) {
      break;
    }
    start = pos + 1;
  }
  return fields;
}

double parse_field(const std::string& f, const std::string& path) {
  double v = 0.0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
    throw FormatError("run csv " + path + ": cannot parse '" + f + "'");
  }
  return v;
}

}  // namespace

RunRecord load_run_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("load_run_csv: cannot open " + path.string());
  }
  RunRecord rec;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    if (line.front() == '#') {
      std::istringstream meta(line.substr(1));
      std::string tok;
      while (meta >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) {
          continue;
        }
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "seed") {
          rec.seed = std::stoull(val);
        } else if (key == "config_hash") {
          rec.config_hash = std::stoull(val);
        } else if (key == "code_version") {
          rec.code_version = val;
        } else if (key == "rng") {
          rec.rng_algorithm = val;
        }
      }
      continue;
    }
    const std::vector<std::string> fields = split(line, ',');
    if (!have_header) {
      if (fields.size() < 5 || fields[0] != "epoch") {
        throw FormatError("load_run_csv: bad column header in " + path.string());
      }
      for (std::size_t i = 5; i + 2 < fields.size() + 1; i += 3) {
        const std::string& name = fields[i];
        const auto suffix = name.rfind("_fpr95");
        if (suffix == std::string::npos) {
          throw FormatError("load_run_csv: unexpected column '" + name + "' in " + path.string());
        }
        rec.methods.push_back(name.substr(0, suffix));
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 5 + 3 * rec.methods.size()) {
      throw FormatError("load_run_csv: ragged row in " + path.string());
    }
    RunRow row;
    row.epoch = static_cast<std::size_t>(parse_field(fields[0], path.string()));
    row.train_loss = parse_field(fields[1], path.string());
    row.objective = parse_field(fields[2], path.string());
    row.train_acc = parse_field(fields[3], path.string());
    row.id_acc = parse_field(fields[4], path.string());
    row.evaluated = std::isfinite(row.id_acc);
    for (std::size_t m = 0; m < rec.methods.size(); ++m) {
      row.fpr95.push_back(parse_field(fields[5 + 3 * m], path.string()));
      row.auroc.push_back(parse_field(fields[6 + 3 * m], path.string()));
      row.aupr.push_back(parse_field(fields[7 + 3 * m], path.string()));
    }
    rec.rows.push_back(std::move(row));
  }
  if (!have_header) {
    throw FormatError("load_run_csv: no header row in " + path.string());
  }
  return rec;
}

}  // namespace umood
