#pragma once

#include <string>

#include "eyemark/graph.hpp"

namespace eyemark {

// Coordinate-regression loss selection. Losses act on decoded normalized
// coordinates, so the wing defaults are the conventional pixel-space
// (10, 2) divided by the 64-cell heatmap extent.
struct LossConfig {
  enum Kind { kMse, kHuber, kWing };
  Kind kind = kWing;
  double delta = 10.0 / 64.0;    // huber knee
  double w = 10.0 / 64.0;        // wing log/linear switch
  double epsilon = 2.0 / 64.0;   // wing curvature
};

int apply_loss(Graph& g, const LossConfig& cfg, int pr, int gt);

// The constant C joining the wing branches continuously at |d| = w.
double wing_linear_offset(double w, double epsilon);

LossConfig::Kind parse_loss_kind(const std::string& s);
std::string loss_kind_name(LossConfig::Kind k);

}  // namespace eyemark
