#include "umood/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "umood/error.hpp"
#include "umood/util.hpp"

namespace umood {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) {
    return "";
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    parts.push_back(trim(text.substr(start, comma - start)));
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return parts;
}

double parse_double_token(const std::string& tok, const std::string& context) {
  if (tok == "inf" || tok == "Inf" || tok == "INF") {
    return std::numeric_limits<double>::infinity();
  }
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw ArgumentError(context + ": cannot parse number '" + tok + "'");
  }
  return v;
}

}  // namespace

Config Config::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("config: cannot open " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path.string());
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') {
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config " + origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw FormatError("config " + origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  return parse_double_token(it->second, "config key '" + key + "'");
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  long long v = 0;
  const std::string& tok = it->second;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw ArgumentError("config key '" + key + "': cannot parse integer '" + tok + "'");
  }
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  if (it->second == "1" || it->second == "true" || it->second == "yes") {
    return true;
  }
  if (it->second == "0" || it->second == "false" || it->second == "no") {
    return false;
  }
  throw ArgumentError("config key '" + key + "': cannot parse boolean '" + it->second + "'");
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  return parse_double_list(it->second);
}

std::vector<std::string> Config::get_string_list(const std::string& key,
                                                 const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  return split_commas(it->second);
}

std::vector<std::uint64_t> Config::get_seed_list(const std::string& key,
                                                 const std::vector<std::uint64_t>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    return fallback;
  }
  std::vector<std::uint64_t> seeds;
  for (const std::string& tok : split_commas(it->second)) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
      throw ArgumentError("config key '" + key + "': cannot parse seed '" + tok + "'");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) {
    throw ArgumentError("config key '" + key + "': empty seed list");
  }
  return seeds;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {  // std::map iterates in key order
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::uint64_t Config::hash() const { return fnv1a64(canonical()); }

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& tok : split_commas(text)) {
    if (tok.empty()) {
      throw ArgumentError("malformed list '" + text + "'");
    }
    out.push_back(parse_double_token(tok, "list"));
  }
  if (out.empty()) {
    throw ArgumentError("empty list");
  }
  return out;
}

}  // namespace umood
