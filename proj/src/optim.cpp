#include "eyemark/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace eyemark {

Rmsprop::Rmsprop(const RmspropConfig& cfg) : cfg_(cfg) {
  if (cfg.lr < 0.0) throw std::invalid_argument("rmsprop: lr must be non-negative");
  if (cfg.rho < 0.0 || cfg.rho >= 1.0)
    throw std::invalid_argument("rmsprop: rho must lie in [0, 1)");
  if (cfg.eps <= 0.0) throw std::invalid_argument("rmsprop: eps must be positive");
}

void Rmsprop::update(Param& p, const Tensor& grad) {
  if (!grad.same_shape(p.value))
    throw std::invalid_argument("rmsprop: gradient shape mismatch for parameter '" +
                                p.name + "'");
  if (!grad.all_finite())
    throw std::runtime_error("rmsprop: non-finite gradient for parameter '" +
                             p.name + "'");

  auto it = acc_.find(p.name);
  if (it == acc_.end())
    it = acc_.emplace(p.name, Tensor::zeros(p.value.shape())).first;
  Tensor& acc = it->second;

  const double* g = grad.data();
  double* a = acc.data();
  double* v = p.value.data();
  long long n = p.value.numel();
  for (long long i = 0; i < n; ++i) {
    a[i] = cfg_.rho * a[i] + (1.0 - cfg_.rho) * g[i] * g[i];
    v[i] -= cfg_.lr * g[i] / (std::sqrt(a[i]) + cfg_.eps);
  }
}

const Tensor* Rmsprop::accumulator(const std::string& name) const {
  auto it = acc_.find(name);
  return it == acc_.end() ? nullptr : &it->second;
}

}  // namespace eyemark
