#include "eyemark/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eyemark {

void validate_landmarks(const LandmarkSet& lm) {
  if (lm.frame_w <= 0 || lm.frame_h <= 0)
    throw std::invalid_argument("landmarks: empty frame " + std::to_string(lm.frame_w) + "x" +
                                std::to_string(lm.frame_h));
  for (int i = 0; i < kNumLandmarks; ++i) {
    const double x = lm.points[static_cast<size_t>(i)][0];
    const double y = lm.points[static_cast<size_t>(i)][1];
    if (!std::isfinite(x) || !std::isfinite(y) || x < 0 || x >= lm.frame_w || y < 0 || y >= lm.frame_h)
      throw std::invalid_argument("landmark " + std::to_string(i) + " at (" + std::to_string(x) + "," +
                                  std::to_string(y) + ") outside frame " + std::to_string(lm.frame_w) + "x" +
                                  std::to_string(lm.frame_h));
  }
}

Tensor encode_gt(const LandmarkSet& lm, int hm_h, int hm_w, double sigma) {
  if (sigma <= 0) throw std::invalid_argument("encode_gt: sigma must be positive");
  validate_landmarks(lm);
  Tensor maps({kNumLandmarks, hm_h, hm_w});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < kNumLandmarks; ++i) {
    const double sx = lm.points[static_cast<size_t>(i)][0] * hm_w / lm.frame_w;
    const double sy = lm.points[static_cast<size_t>(i)][1] * hm_h / lm.frame_h;
    const int cx = std::clamp(static_cast<int>(std::lround(sx)), 0, hm_w - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(sy)), 0, hm_h - 1);
    for (int y = 0; y < hm_h; ++y)
      for (int x = 0; x < hm_w; ++x) {
        const double d2 = static_cast<double>((x - cx) * (x - cx) + (y - cy) * (y - cy));
        maps.at3(i, y, x) = std::exp(-d2 * inv);
      }
  }
  return maps;
}

std::array<bool, kNumLandmarks> border_flags(const LandmarkSet& lm, int hm_h, int hm_w, double sigma) {
  std::array<bool, kNumLandmarks> flags{};
  for (int i = 0; i < kNumLandmarks; ++i) {
    const double sx = lm.points[static_cast<size_t>(i)][0] * hm_w / lm.frame_w;
    const double sy = lm.points[static_cast<size_t>(i)][1] * hm_h / lm.frame_h;
    flags[static_cast<size_t>(i)] =
        sx < 2 * sigma || sx > hm_w - 1 - 2 * sigma || sy < 2 * sigma || sy > hm_h - 1 - 2 * sigma;
  }
  return flags;
}

int soft_argmax_node(Graph& g, int logits) {
  const Tensor& lv = g.value(logits);
  if (lv.rank() != 4) throw std::invalid_argument("soft_argmax: expected [N,C,H,W], got " + shape_str(lv.shape()));
  const int N = lv.extent(0), C = lv.extent(1), H = lv.extent(2), W = lv.extent(3);
  Tensor gx({N, C, H, W}), gy({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          gx.at4(n, c, y, x) = static_cast<double>(x) / W;
          gy.at4(n, c, y, x) = static_cast<double>(y) / H;
        }
  const int p = g.spatial_softmax(logits);
  const int ex = g.reduce_spatial_sum(g.mul(p, g.input(std::move(gx))));
  const int ey = g.reduce_spatial_sum(g.mul(p, g.input(std::move(gy))));
  return g.stack_last2(ex, ey);
}

Tensor soft_argmax_decode(const Tensor& logits) {
  Graph g;
  return g.value(soft_argmax_node(g, g.input(logits)));
}

Image render_overlay_image(const Image& img, const Tensor& maps) {
  const Tensor* m = &maps;
  Tensor squeezed;
  if (maps.rank() == 4 && maps.extent(0) == 1) {
    squeezed = Tensor({maps.extent(1), maps.extent(2), maps.extent(3)});
    std::copy(maps.data(), maps.data() + maps.numel(), squeezed.data());
    m = &squeezed;
  }
  if (m->rank() != 3) throw std::invalid_argument("render_overlay: maps must be [C,Hm,Wm], got " + shape_str(maps.shape()));
  const int C = m->extent(0), Hm = m->extent(1), Wm = m->extent(2);

  Image out = Image::make(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double gray;
      if (img.channels == 3)
        gray = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      else
        gray = img.at(x, y, 0);
      // Nearest heat cell for this pixel.
      const int hx = std::min(x * Wm / img.width, Wm - 1);
      const int hy = std::min(y * Hm / img.height, Hm - 1);
      double heat = 0.0;
      for (int c = 0; c < C; ++c) heat = std::max(heat, m->at3(c, hy, hx));
      heat = std::clamp(heat, 0.0, 1.0);
      const double r = gray + heat * (255.0 - gray);
      const double gb = gray * (1.0 - heat);
      out.at(x, y, 0) = static_cast<uint8_t>(std::clamp(std::lround(r), 0l, 255l));
      out.at(x, y, 1) = static_cast<uint8_t>(std::clamp(std::lround(gb), 0l, 255l));
      out.at(x, y, 2) = static_cast<uint8_t>(std::clamp(std::lround(gb), 0l, 255l));
    }
  return out;
}

void render_overlay(const Image& img, const Tensor& maps, const std::string& out_path) {
  save_image(out_path, render_overlay_image(img, maps));
}

}  // namespace eyemark
