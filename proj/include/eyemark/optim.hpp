#pragma once

#include <string>
#include <unordered_map>

#include "eyemark/nn.hpp"
#include "eyemark/tensor.hpp"

namespace eyemark {

struct RmspropConfig {
  double lr = 2.5e-4;
  double rho = 0.99;
  double eps = 1e-8;
};

// RMSprop with per-parameter squared-gradient accumulators keyed by
// parameter name, so the optimizer state survives graph rebuilds.
class Rmsprop {
 public:
  explicit Rmsprop(const RmspropConfig& cfg);

  // acc <- rho*acc + (1-rho)*g^2, p <- p - lr*g/(sqrt(acc)+eps).
  // Throws if the gradient is non-finite, naming the parameter.
  void update(Param& p, const Tensor& grad);

  const RmspropConfig& config() const { return cfg_; }
  const Tensor* accumulator(const std::string& name) const;

 private:
  RmspropConfig cfg_;
  std::unordered_map<std::string, Tensor> acc_;
};

}  // namespace eyemark
