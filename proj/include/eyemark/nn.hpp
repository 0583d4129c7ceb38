#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eyemark/graph.hpp"
#include "eyemark/tensor.hpp"

namespace eyemark {

struct Param {
  std::string name;
  Tensor value;
};

// Owns every learnable tensor and batchnorm statistic of a model, keyed by
// a unique dotted name. Kernels come up fan-in-scaled uniform from a
// substream derived from (seed, name), so adding a block never perturbs
// another block's initialization.
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t seed) : seed_(seed) {}
  ParamRegistry(const ParamRegistry&) = delete;
  ParamRegistry& operator=(const ParamRegistry&) = delete;

  Param& kernel(const std::string& name, Shape shape, long long fan_in);
  Param& zeros(const std::string& name, Shape shape);
  Param& ones(const std::string& name, Shape shape);
  BatchNormStats& bn_stats(const std::string& name, int channels);

  std::deque<Param>& params() { return params_; }
  const std::deque<Param>& params() const { return params_; }
  std::deque<std::pair<std::string, BatchNormStats>>& stats() { return stats_; }
  const std::deque<std::pair<std::string, BatchNormStats>>& stats() const { return stats_; }

  Param* find(const std::string& name);
  long long total_params() const;
  uint64_t seed() const { return seed_; }

 private:
  Param& emplace(const std::string& name, Tensor value);
  uint64_t seed_;
  std::deque<Param> params_;
  std::deque<std::pair<std::string, BatchNormStats>> stats_;
  std::set<std::string> names_;
};

// Per-graph registration of parameters as leaf nodes. One forward pass =
// one Binder; after backward, bound() pairs every touched parameter with
// its node so the optimizer can fetch gradients.
class Binder {
 public:
  Binder(Graph& g, bool training) : g_(g), training_(training) {}
  Graph& graph() { return g_; }
  bool training() const { return training_; }

  int operator()(Param& p) {
    auto it = memo_.find(&p);
    if (it != memo_.end()) return it->second;
    const int id = g_.input(p.value, true);
    memo_.emplace(&p, id);
    order_.push_back({&p, id});
    return id;
  }

  const std::vector<std::pair<Param*, int>>& bound() const { return order_; }

 private:
  Graph& g_;
  bool training_;
  std::unordered_map<Param*, int> memo_;
  std::vector<std::pair<Param*, int>> order_;
};

// conv -> batchnorm (or bias) -> optional relu.
class ConvUnit {
 public:
  ConvUnit(ParamRegistry& reg, const std::string& name, int cin, int cout, int k, int stride, int pad, bool norm,
           bool act);
  int forward(Binder& b, int x) const;

 private:
  Param* kernel_;
  Param* gamma_ = nullptr;
  Param* beta_ = nullptr;
  Param* bias_ = nullptr;
  BatchNormStats* stats_ = nullptr;
  int stride_, pad_;
  bool act_;
};

// y = x + f(x) with a 1x1 -> 3x3 -> 1x1 bottleneck f. Zeroing the last
// 1x1 kernel and its shift makes the block an exact identity.
class ResidualBlock {
 public:
  ResidualBlock(ParamRegistry& reg, const std::string& name, int channels, bool norm);
  int forward(Binder& b, int x) const;

 private:
  ConvUnit cu1_, cu2_, cu3_;
};

// Aggregation junction: depthwise-convolved deep features concatenated
// with shallow features, merged by a 1x1 unit.
class Dlau {
 public:
  Dlau(ParamRegistry& reg, const std::string& name, int channels, bool norm);
  int forward(Binder& b, int shallow, int deep) const;

 private:
  Param* kd_;
  ConvUnit merge_;
};

// Entry: 7x7 stride-2 unit, 2x2 maxpool, then a plain biased 3x3 conv.
// Takes the frame to quarter resolution.
class Stem {
 public:
  Stem(ParamRegistry& reg, const std::string& name, int channels, bool norm);
  int forward(Binder& b, int x) const;

 private:
  ConvUnit cu1_, cu2_;
};

struct HourglassConfig {
  int depth = 4;
  int channels = 64;
  enum SkipKind { kDlau, kResidual } skip_kind = kDlau;
};

// Symmetric encoder-decoder. Each level pools, applies a residual block,
// recurses, upsamples, and joins the skip path per skip_kind; the
// bottleneck is a zero-able 3x3 unit, merged with its own input through a
// DLAU in the dlau variant.
class Hourglass {
 public:
  Hourglass(ParamRegistry& reg, const std::string& name, HourglassConfig cfg, bool norm);
  int forward(Binder& b, int x) const;
  const HourglassConfig& config() const { return cfg_; }

 private:
  int level(Binder& b, int x, int d) const;
  HourglassConfig cfg_;
  std::vector<ResidualBlock> down_;
  std::vector<ResidualBlock> skip_res_;
  std::vector<Dlau> skip_dlau_;
  ConvUnit bottom_;
  std::optional<Dlau> bottom_merge_;
};

}  // namespace eyemark
