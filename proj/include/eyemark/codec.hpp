#pragma once

#include <array>
#include <string>

#include "eyemark/graph.hpp"
#include "eyemark/image.hpp"
#include "eyemark/tensor.hpp"

namespace eyemark {

// Eye landmarks: 68-point indices 37-48 (1-based) as local 0-11.
constexpr int kNumLandmarks = 12;

// Landmark coordinates in pixel units of an associated frame.
struct LandmarkSet {
  std::array<std::array<double, 2>, kNumLandmarks> points{};  // (x,y)
  double frame_w = 0.0;
  double frame_h = 0.0;
};

// Throws std::invalid_argument unless every point is finite and inside
// [0,frame_w) x [0,frame_h).
void validate_landmarks(const LandmarkSet& lm);

// Per-landmark ground-truth heatmaps [12,hm_h,hm_w]. Landmarks are scaled
// into heatmap units and rounded to the nearest cell; each map is
// exp(-((x-cx)^2+(y-cy)^2)/(2 sigma^2)) with peak exactly 1.0 at that cell.
Tensor encode_gt(const LandmarkSet& lm, int hm_h, int hm_w, double sigma);

// True where the scaled landmark lies within 2 sigma of the heatmap border;
// round-trip accuracy guarantees exclude these.
std::array<bool, kNumLandmarks> border_flags(const LandmarkSet& lm, int hm_h, int hm_w, double sigma);

// Differentiable decode: spatial softmax over each [N,C,H,W] slice, then
// the two coordinate expectations x = sum p*(x/W), y = sum p*(y/H).
// Result node is [N,C,2] with values in [0,1)^2.
int soft_argmax_node(Graph& g, int logits);

// Same computation on a plain tensor.
Tensor soft_argmax_decode(const Tensor& logits);

// Grayscale copy of the image with per-landmark heat blended in red.
// maps is [12,Hm,Wm] (or [1,12,Hm,Wm]); cells map to image pixels by
// nearest-neighbor block scaling.
Image render_overlay_image(const Image& img, const Tensor& maps);
void render_overlay(const Image& img, const Tensor& maps, const std::string& out_path);

}  // namespace eyemark
