#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace umood {

// Flat key-value experiment configuration with dotted section keys:
//
//   # comment
//   train.lr = 0.1
//   model.hidden = 64,64
//   seeds = 1,2,3
//
// Keys are free-form; commands read the ones they understand. The canonical
// serialization (sorted "key=value" lines) feeds the config hash recorded in
// every output.
class Config {
 public:
  Config() = default;

  static Config parse_file(const std::filesystem::path& path);
  static Config parse_text(const std::string& text, const std::string& origin = "<memory>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Comma-separated lists.
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const;
  std::vector<std::uint64_t> get_seed_list(const std::string& key,
                                           const std::vector<std::uint64_t>& fallback) const;

  std::string canonical() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// "1,2.5,inf" -> doubles; ArgumentError (usage) on malformed entries.
std::vector<double> parse_double_list(const std::string& text);

}  // namespace umood
