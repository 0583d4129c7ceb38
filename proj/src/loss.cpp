#include "eyemark/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace eyemark {

int apply_loss(Graph& g, const LossConfig& cfg, int pr, int gt) {
  switch (cfg.kind) {
    case LossConfig::kMse:
      return g.mse_loss(pr, gt);
    case LossConfig::kHuber:
      return g.huber_loss(pr, gt, cfg.delta);
    case LossConfig::kWing:
      return g.wing_loss(pr, gt, cfg.w, cfg.epsilon);
  }
  throw std::logic_error("unknown loss kind");
}

double wing_linear_offset(double w, double epsilon) {
  return w - w * std::log(1.0 + w / epsilon);
}

LossConfig::Kind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossConfig::kMse;
  if (s == "huber") return LossConfig::kHuber;
  if (s == "wing") return LossConfig::kWing;
  throw std::invalid_argument("unknown loss kind '" + s +
                              "' (expected mse, huber, or wing)");
}

std::string loss_kind_name(LossConfig::Kind k) {
  switch (k) {
    case LossConfig::kMse: return "mse";
    case LossConfig::kHuber: return "huber";
    case LossConfig::kWing: return "wing";
  }
  throw std::logic_error("unknown loss kind");
}

}  // namespace eyemark
