#include "eyemark/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "eyemark/image.hpp"

namespace eyemark {

double mean_point_error(const LandmarkSet& pred, const LandmarkSet& gt) {
  double sum = 0.0;
  for (int i = 0; i < kNumLandmarks; ++i) {
    const double dx = pred.points[static_cast<size_t>(i)][0] - gt.points[static_cast<size_t>(i)][0];
    const double dy = pred.points[static_cast<size_t>(i)][1] - gt.points[static_cast<size_t>(i)][1];
    sum += std::sqrt(dx * dx + dy * dy);
  }
  return sum / kNumLandmarks;
}

double interocular(const LandmarkSet& gt) {
  const double dx = gt.points[0][0] - gt.points[9][0];
  const double dy = gt.points[0][1] - gt.points[9][1];
  return std::sqrt(dx * dx + dy * dy);
}

double sample_nme(const LandmarkSet& pred, const LandmarkSet& gt) {
  const double iod = interocular(gt);
  if (!(iod > 0.0)) throw std::invalid_argument("nme: inter-ocular distance is zero");
  return mean_point_error(pred, gt) / iod;
}

EvalReport ced_auc_fr(const std::vector<double>& nmes, double threshold) {
  if (nmes.empty()) throw std::invalid_argument("ced_auc_fr: empty error list");
  if (!(threshold > 0.0)) throw std::invalid_argument("ced_auc_fr: threshold must be positive");
  for (double v : nmes)
    if (!std::isfinite(v) || v < 0.0)
      throw std::invalid_argument("ced_auc_fr: errors must be finite and non-negative");

  EvalReport r;
  r.threshold = threshold;
  r.nmes = nmes;
  r.n = static_cast<int>(nmes.size());

  std::vector<double> sorted = nmes;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());

  double sum = 0.0;
  for (double v : sorted) sum += v;
  r.nme_mean = sum / n;

  // Full empirical staircase: one step per distinct value.
  for (size_t i = 0; i < sorted.size();) {
    size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    r.ced.push_back({sorted[i], static_cast<double>(j) / n});
    i = j;
  }

  // Exact integral of the staircase over [0, threshold].
  double area = 0.0, prev_t = 0.0;
  long long below = 0;
  for (size_t i = 0; i < sorted.size();) {
    const double v = sorted[i];
    if (v > threshold) break;
    area += (v - prev_t) * static_cast<double>(below);
    prev_t = v;
    while (i < sorted.size() && sorted[i] == v) {
      ++below;
      ++i;
    }
  }
  area += (threshold - prev_t) * static_cast<double>(below);
  r.auc = area / (threshold * n);
  r.fr = static_cast<double>(sorted.size() - static_cast<size_t>(below)) / n;
  return r;
}

EvalReport evaluate_landmarks(const std::vector<LandmarkSet>& pred,
                              const std::vector<LandmarkSet>& gt, double threshold) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("evaluate_landmarks: prediction/ground-truth count mismatch");
  std::vector<double> nmes;
  int excluded = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!(interocular(gt[i]) > 0.0)) {
      ++excluded;
      continue;
    }
    nmes.push_back(sample_nme(pred[i], gt[i]));
  }
  if (nmes.empty()) throw std::invalid_argument("evaluate_landmarks: no sample has a usable normalizer");
  EvalReport r = ced_auc_fr(nmes, threshold);
  r.excluded = excluded;
  return r;
}

namespace {

std::string threshold_slug(double threshold) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", threshold);
  std::string s = buf;
  for (char& c : s)
    if (c == '.') c = '_';
  return s;
}

}  // namespace

std::string report_json(const EvalReport& r) {
  using json = nlohmann::ordered_json;
  json ced = json::array();
  for (const auto& step : r.ced) ced.push_back({step[0], step[1]});
  const std::string slug = threshold_slug(r.threshold);
  const json j = {{"n", r.n},
                  {"excluded", r.excluded},
                  {"nme_mean", r.nme_mean},
                  {"auc_" + slug, r.auc},
                  {"fr_" + slug, r.fr},
                  {"ced", ced}};
  return j.dump(2) + "\n";
}

void write_report(const std::string& path, const EvalReport& r) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write report " + path);
  f << report_json(r);
  if (!f) throw std::runtime_error("write failed for report " + path);
}

void render_ced_plot(const std::string& path, const EvalReport& r, int width, int height) {
  if (width < 120 || height < 100) throw std::invalid_argument("render_ced_plot: canvas too small");
  const int left = 48, right = 16, top = 16, bottom = 36;
  const int pw = width - left - right, ph = height - top - bottom;

  Image img = Image::make(width, height, 3, 255);
  const Rgb grid{220, 220, 220}, axis{0, 0, 0}, curve{200, 30, 30};

  for (int k = 0; k <= 5; ++k) {
    const int x = left + pw * k / 5;
    draw_line(img, x, top, x, top + ph, grid);
  }
  for (int k = 0; k <= 4; ++k) {
    const int y = top + ph * k / 4;
    draw_line(img, left, y, left + pw, y, grid);
  }

  std::vector<double> sorted = r.nmes;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto frac_at = [&](double t) {
    return n == 0.0 ? 0.0
                    : static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), t) -
                                          sorted.begin()) /
                          n;
  };

  int prev_y = 0;
  for (int px = 0; px <= pw; ++px) {
    const double t = r.threshold * px / pw;
    const int y = top + ph - static_cast<int>(std::lround(frac_at(t) * ph));
    const int x = left + px;
    if (px > 0) draw_line(img, x - 1, prev_y, x, y, curve);
    prev_y = y;
  }

  draw_line(img, left, top, left, top + ph, axis);
  draw_line(img, left, top + ph, left + pw, top + ph, axis);

  save_image(path, img);
}

}  // namespace eyemark
