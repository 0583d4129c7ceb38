#include "eyemark/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace eyemark {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  char prev = 0;
  for (char c : k) {
    if (c == '.' && prev == '.') return false;
    if (c != '.' && c != '_' && c != '-' && !std::isalnum(static_cast<unsigned char>(c)))
      return false;
    prev = c;
  }
  return true;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + what);
}

// Value text after '='. Either a double-quoted string (which may contain
// '#') followed only by whitespace or a comment, or a bare token cut at
// the first '#'.
std::string parse_value(const std::string& origin, int line, const std::string& raw) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '"') {
    size_t close = v.find('"', 1);
    if (close == std::string::npos) fail(origin, line, "unterminated quoted value");
    std::string rest = trim(v.substr(close + 1));
    if (!rest.empty() && rest.front() != '#')
      fail(origin, line, "trailing characters after quoted value");
    return v.substr(1, close - 1);
  }
  size_t hash = v.find('#');
  if (hash != std::string::npos) v = trim(v.substr(0, hash));
  if (v.empty()) fail(origin, line, "missing value");
  return v;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s.front() == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(origin, line, "unterminated section header");
      std::string name = trim(s.substr(1, s.size() - 2));
      if (!valid_key(name)) fail(origin, line, "bad section name '" + name + "'");
      section = name + ".";
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) fail(origin, line, "expected key = value");
    std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) fail(origin, line, "bad key '" + key + "'");
    key = section + key;
    if (cfg.values_.count(key)) fail(origin, line, "duplicate key '" + key + "'");
    cfg.values_[key] = parse_value(origin, line, s.substr(eq + 1));
  }
  return cfg;
}

bool Config::has(const std::string& key) const {
  used_.insert(key);
  return values_.count(key) != 0;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  used_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected integer, got '" +
                                it->second + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected number, got '" +
                                it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" +
                              it->second + "'");
}

std::set<std::string> Config::unknown_keys() const {
  std::set<std::string> extra;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) extra.insert(k);
  return extra;
}

namespace {

int int_setting(const Config& c, const std::string& key, int fallback, int lo) {
  long long v = c.get_int(key, fallback);
  if (v < lo || v > std::numeric_limits<int>::max())
    throw std::invalid_argument("config key '" + key + "': " + std::to_string(v) +
                                " is out of range (minimum " + std::to_string(lo) + ")");
  return static_cast<int>(v);
}

double positive_setting(const Config& c, const std::string& key, double fallback) {
  double v = c.get_double(key, fallback);
  if (!(v > 0.0))
    throw std::invalid_argument("config key '" + key + "': must be positive");
  return v;
}

}  // namespace

Settings settings_from(const Config& cfg) {
  Settings s;
  ModelConfig& m = s.model;
  m.stages = int_setting(cfg, "model.stages", m.stages, 1);
  m.hourglass.depth = int_setting(cfg, "model.depth", m.hourglass.depth, 1);
  m.hourglass.channels = int_setting(cfg, "model.channels", m.hourglass.channels, 1);
  const std::string skip = cfg.get_string("model.skip", "dlau");
  if (skip == "dlau")
    m.hourglass.skip_kind = HourglassConfig::kDlau;
  else if (skip == "residual")
    m.hourglass.skip_kind = HourglassConfig::kResidual;
  else
    throw std::invalid_argument("config key 'model.skip': expected dlau or residual, got '" +
                                skip + "'");
  m.attention_enabled = cfg.get_bool("model.attention", m.attention_enabled);
  m.norm_enabled = cfg.get_bool("model.norm", m.norm_enabled);
  m.uniform_similarity = cfg.get_bool("model.uniform_similarity", m.uniform_similarity);
  m.input_size = int_setting(cfg, "model.input_size", m.input_size, 4);
  long long seed = cfg.get_int("model.seed", static_cast<long long>(m.seed));
  if (seed < 0) throw std::invalid_argument("config key 'model.seed': must be non-negative");
  m.seed = static_cast<uint64_t>(seed);

  const std::string kind = cfg.get_string("loss.kind", "wing");
  if (kind == "mse")
    m.loss.kind = LossConfig::kMse;
  else if (kind == "huber")
    m.loss.kind = LossConfig::kHuber;
  else if (kind == "wing")
    m.loss.kind = LossConfig::kWing;
  else
    throw std::invalid_argument("config key 'loss.kind': expected mse, huber or wing, got '" +
                                kind + "'");
  m.loss.delta = positive_setting(cfg, "loss.delta", m.loss.delta);
  m.loss.w = positive_setting(cfg, "loss.w", m.loss.w);
  m.loss.epsilon = positive_setting(cfg, "loss.epsilon", m.loss.epsilon);

  TrainConfig& t = s.train;
  t.optim.lr = cfg.get_double("train.lr", t.optim.lr);
  if (t.optim.lr < 0.0) throw std::invalid_argument("config key 'train.lr': must be non-negative");
  t.optim.rho = cfg.get_double("train.rho", t.optim.rho);
  t.optim.eps = cfg.get_double("train.eps", t.optim.eps);
  t.batch = int_setting(cfg, "train.batch", t.batch, 1);
  t.epochs = int_setting(cfg, "train.epochs", t.epochs, 0);
  t.divergence = positive_setting(cfg, "train.divergence", t.divergence);

  s.eval_threshold = positive_setting(cfg, "eval.threshold", s.eval_threshold);

  const auto extra = cfg.unknown_keys();
  if (!extra.empty()) {
    std::string list;
    for (const auto& k : extra) list += (list.empty() ? "'" : ", '") + k + "'";
    throw std::invalid_argument("config: unknown key " + list);
  }
  return s;
}

std::string describe(const Settings& s) {
  std::ostringstream out;
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return std::string(buf);
  };
  auto onoff = [](bool v) { return v ? "true" : "false"; };
  const char* kind = s.model.loss.kind == LossConfig::kMse      ? "mse"
                     : s.model.loss.kind == LossConfig::kHuber ? "huber"
                                                               : "wing";
  out << "eval.threshold = " << num(s.eval_threshold) << "\n"
      << "loss.delta = " << num(s.model.loss.delta) << "\n"
      << "loss.epsilon = " << num(s.model.loss.epsilon) << "\n"
      << "loss.kind = " << kind << "\n"
      << "loss.w = " << num(s.model.loss.w) << "\n"
      << "model.attention = " << onoff(s.model.attention_enabled) << "\n"
      << "model.channels = " << s.model.hourglass.channels << "\n"
      << "model.depth = " << s.model.hourglass.depth << "\n"
      << "model.input_size = " << s.model.input_size << "\n"
      << "model.norm = " << onoff(s.model.norm_enabled) << "\n"
      << "model.seed = " << s.model.seed << "\n"
      << "model.skip = "
      << (s.model.hourglass.skip_kind == HourglassConfig::kDlau ? "dlau" : "residual") << "\n"
      << "model.stages = " << s.model.stages << "\n"
      << "model.uniform_similarity = " << onoff(s.model.uniform_similarity) << "\n"
      << "train.batch = " << s.train.batch << "\n"
      << "train.divergence = " << num(s.train.divergence) << "\n"
      << "train.epochs = " << s.train.epochs << "\n"
      << "train.eps = " << num(s.train.optim.eps) << "\n"
      << "train.lr = " << num(s.train.optim.lr) << "\n"
      << "train.rho = " << num(s.train.optim.rho) << "\n";
  return out.str();
}

}  // namespace eyemark
