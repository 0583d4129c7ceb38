#pragma once

#include <map>
#include <set>
#include <string>

#include "eyemark/model.hpp"
#include "eyemark/train.hpp"

namespace eyemark {

// Flat key/value configuration file. `[section]` headers prefix the keys
// that follow; dotted keys work directly. Values are bare scalars or
// double-quoted strings, `#` starts a comment. Every getter records the
// key it touched so unknown_keys() can expose typos.
class Config {
 public:
  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Keys present in the file that no getter has asked for.
  std::set<std::string> unknown_keys() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::string origin_ = "config";
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

// Everything a run needs, resolved from defaults plus one config file.
struct Settings {
  ModelConfig model;
  TrainConfig train;
  double eval_threshold = 0.05;
};

// Reads every recognized key from `cfg` and rejects the file if anything
// is left over or out of range.
Settings settings_from(const Config& cfg);

// One "key = value" line per setting, sorted, for run logs.
std::string describe(const Settings& s);

}  // namespace eyemark
