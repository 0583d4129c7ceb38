#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eyemark/tensor.hpp"

namespace eyemark {

// 8-bit interleaved raster, RGB (channels=3) or grayscale (channels=1).
// Pixel (x,y) is a point at integer coordinates; bilinear sampling treats
// the image as samples on that grid.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> px;

  static Image make(int w, int h, int c, uint8_t fill = 0);
  bool empty() const { return px.empty(); }
  uint8_t at(int x, int y, int c) const;
  uint8_t& at(int x, int y, int c);
};

Image load_image(const std::string& path);
void save_image(const std::string& path, const Image& img);

// Bilinear sample of one channel at real coordinates, clamped to the frame.
double bilinear_at(const Image& img, double x, double y, int c);

Image hflip_image(const Image& img);

// Crop the axis-aligned box with origin (x0,y0) and size (w,h), rescaled to
// out_w x out_h. Output pixel (j,i) samples the source at
// (x0 + j*w/out_w, y0 + i*h/out_h), matching the coordinate map
// x_new = (x-x0)*out_w/w.
Image crop_resize_image(const Image& img, double x0, double y0, double w, double h, int out_w, int out_h);

// Rotate by theta (degrees, positive per x' = x cos + y sin convention)
// about the pixel-grid center ((w-1)/2,(h-1)/2). Same frame size; source
// samples falling outside the frame come out black.
Image rotate_image(const Image& img, double theta_deg);

// 9x9 blur kernel exp(-(dx^2+dy^2)/(2*sigma^2)), sigma=1.8, scaled to unit
// sum.
std::array<double, 81> gaussian_kernel9();

// 9x9 blur of one double-valued plane, replicate border.
std::vector<double> blur9_plane(const std::vector<double>& plane, int w, int h);

Image gaussian_blur9(const Image& img);

// [1,C,H,W] tensor with values scaled to [0,1].
Tensor image_to_tensor(const Image& img);
// Inverse of image_to_tensor for a [1,C,H,W] or [C,H,W] tensor; values are
// clamped to [0,1] before quantizing.
Image tensor_to_image(const Tensor& t);

// Drawing helpers for overlays, fixtures and plots.
struct Rgb {
  uint8_t r, g, b;
};
void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb c);
void draw_line(Image& img, int x0, int y0, int x1, int y1, Rgb c);
void draw_disc(Image& img, double cx, double cy, double r, Rgb c);
void draw_ellipse_filled(Image& img, double cx, double cy, double rx, double ry, Rgb c);
void draw_cross(Image& img, double cx, double cy, int arm, Rgb c);

}  // namespace eyemark
