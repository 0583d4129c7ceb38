#pragma once

#include <array>
#include <string>
#include <vector>

#include "eyemark/codec.hpp"

namespace eyemark {

// Mean L2 distance between matching points.
double mean_point_error(const LandmarkSet& pred, const LandmarkSet& gt);

// Normalizer: distance between the outer eye corners, locals 0 and 9.
double interocular(const LandmarkSet& gt);

// Normalized mean error of one sample: mean point error over the 12
// landmarks divided by the ground-truth inter-ocular distance. Throws
// std::invalid_argument when that distance is zero.
double sample_nme(const LandmarkSet& pred, const LandmarkSet& gt);

struct EvalReport {
  int n = 0;         // samples scored
  int excluded = 0;  // samples dropped for a degenerate normalizer
  double threshold = 0.05;
  double nme_mean = 0.0;
  double auc = 0.0;  // area under the cumulative error curve on [0,threshold], /threshold
  double fr = 0.0;   // fraction of samples with error > threshold
  std::vector<double> nmes;                  // per-sample errors, input order
  std::vector<std::array<double, 2>> ced;   // (error, cumulative fraction) staircase steps
};

// Cumulative error distribution, area under it, and failure rate. The area
// is the exact integral of the right-continuous empirical staircase over
// [0, threshold], normalized by the threshold; the hand-integrated
// half-at-0.01 / half-at-0.10 case comes out at exactly 0.4.
EvalReport ced_auc_fr(const std::vector<double>& nmes, double threshold = 0.05);

// Per-sample NME over matched prediction/ground-truth sets. Samples whose
// normalizer is zero are excluded and counted; all-excluded input is
// rejected.
EvalReport evaluate_landmarks(const std::vector<LandmarkSet>& pred,
                              const std::vector<LandmarkSet>& gt, double threshold = 0.05);

// {n, excluded, nme_mean, auc_<thr>, fr_<thr>, ced:[[e,frac],...]} with the
// threshold spelled into the key names (0.05 -> auc_0_05).
std::string report_json(const EvalReport& r);
void write_report(const std::string& path, const EvalReport& r);

// Staircase plot of the cumulative error curve over [0, threshold].
void render_ced_plot(const std::string& path, const EvalReport& r, int width = 640,
                     int height = 480);

}  // namespace eyemark
