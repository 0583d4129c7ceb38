#include "eyemark/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eyemark {

Image Image::make(int w, int h, int c, uint8_t fill) {
  if (w <= 0 || h <= 0 || (c != 1 && c != 3)) throw std::invalid_argument("Image::make: bad dimensions");
  Image img;
  img.width = w;
  img.height = h;
  img.channels = c;
  img.px.assign(static_cast<size_t>(w) * h * c, fill);
  return img;
}

uint8_t Image::at(int x, int y, int c) const {
  return px[(static_cast<size_t>(y) * width + x) * channels + c];
}

uint8_t& Image::at(int x, int y, int c) {
  return px[(static_cast<size_t>(y) * width + x) * channels + c];
}

Image load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("load_image: cannot read " + path);
  cv::Mat rgb;
  cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB);
  Image img = Image::make(rgb.cols, rgb.rows, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const uint8_t* row = rgb.ptr<uint8_t>(y);
    std::copy(row, row + static_cast<size_t>(rgb.cols) * 3, img.px.begin() + static_cast<size_t>(y) * rgb.cols * 3);
  }
  return img;
}

void save_image(const std::string& path, const Image& img) {
  if (img.empty()) throw std::invalid_argument("save_image: empty image");
  cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    std::copy(img.px.begin() + static_cast<size_t>(y) * img.width * img.channels,
              img.px.begin() + static_cast<size_t>(y + 1) * img.width * img.channels, row);
  }
  if (img.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, m)) throw std::runtime_error("save_image: cannot write " + path);
}

double bilinear_at(const Image& img, double x, double y, int c) {
  const double mx = static_cast<double>(img.width - 1);
  const double my = static_cast<double>(img.height - 1);
  x = std::clamp(x, 0.0, mx);
  y = std::clamp(y, 0.0, my);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
  const double v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
  return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

static uint8_t quantize(double v) {
  const double r = std::lround(v);
  return static_cast<uint8_t>(std::clamp(r, 0.0, 255.0));
}

Image hflip_image(const Image& img) {
  Image out = Image::make(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

Image crop_resize_image(const Image& img, double x0, double y0, double w, double h, int out_w, int out_h) {
  if (w <= 0 || h <= 0 || out_w <= 0 || out_h <= 0) throw std::invalid_argument("crop_resize_image: bad box");
  Image out = Image::make(out_w, out_h, img.channels);
  const double sx = w / out_w, sy = h / out_h;
  for (int i = 0; i < out_h; ++i)
    for (int j = 0; j < out_w; ++j) {
      const double srcx = x0 + j * sx;
      const double srcy = y0 + i * sy;
      for (int c = 0; c < img.channels; ++c) out.at(j, i, c) = quantize(bilinear_at(img, srcx, srcy, c));
    }
  return out;
}

Image rotate_image(const Image& img, double theta_deg) {
  const double t = theta_deg * std::acos(-1.0) / 180.0;
  const double co = std::cos(t), si = std::sin(t);
  const double cx = (img.width - 1) * 0.5, cy = (img.height - 1) * 0.5;
  Image out = Image::make(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      // Inverse of x' = x cos + y sin, y' = -x sin + y cos about the center.
      const double dx = x - cx, dy = y - cy;
      const double sx = co * dx - si * dy + cx;
      const double sy = si * dx + co * dy + cy;
      if (sx < 0 || sx > img.width - 1 || sy < 0 || sy > img.height - 1) continue;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = quantize(bilinear_at(img, sx, sy, c));
    }
  return out;
}

std::array<double, 81> gaussian_kernel9() {
  const double sigma = 1.8;
  std::array<double, 81> k{};
  double sum = 0.0;
  for (int dy = -4; dy <= 4; ++dy)
    for (int dx = -4; dx <= 4; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[static_cast<size_t>((dy + 4) * 9 + dx + 4)] = v;
      sum += v;
    }
  for (double& v : k) v /= sum;
  return k;
}

std::vector<double> blur9_plane(const std::vector<double>& plane, int w, int h) {
  if (static_cast<long long>(plane.size()) != static_cast<long long>(w) * h)
    throw std::invalid_argument("blur9_plane: size mismatch");
  const std::array<double, 81> k = gaussian_kernel9();
  std::vector<double> out(plane.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -4; dy <= 4; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -4; dx <= 4; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1);
          acc += k[static_cast<size_t>((dy + 4) * 9 + dx + 4)] * plane[static_cast<size_t>(sy) * w + sx];
        }
      }
      out[static_cast<size_t>(y) * w + x] = acc;
    }
  return out;
}

Image gaussian_blur9(const Image& img) {
  Image out = Image::make(img.width, img.height, img.channels);
  std::vector<double> plane(static_cast<size_t>(img.width) * img.height);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) plane[static_cast<size_t>(y) * img.width + x] = img.at(x, y, c);
    std::vector<double> blurred = blur9_plane(plane, img.width, img.height);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(x, y, c) = quantize(blurred[static_cast<size_t>(y) * img.width + x]);
  }
  return out;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t({1, img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at4(0, c, y, x) = img.at(x, y, c) / 255.0;
  return t;
}

Image tensor_to_image(const Tensor& t) {
  int C, H, W;
  if (t.rank() == 4 && t.extent(0) == 1) {
    C = t.extent(1);
    H = t.extent(2);
    W = t.extent(3);
  } else if (t.rank() == 3) {
    C = t.extent(0);
    H = t.extent(1);
    W = t.extent(2);
  } else {
    throw std::invalid_argument("tensor_to_image: expected [1,C,H,W] or [C,H,W], got " + shape_str(t.shape()));
  }
  if (C != 1 && C != 3) throw std::invalid_argument("tensor_to_image: need 1 or 3 channels");
  Image img = Image::make(W, H, C);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double v = t[(static_cast<long long>(c) * H + y) * W + x];
        img.at(x, y, c) = quantize(std::clamp(v, 0.0, 1.0) * 255.0);
      }
  return img;
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width - 1);
  y1 = std::min(y1, img.height - 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      img.at(x, y, 0) = c.r;
      if (img.channels == 3) {
        img.at(x, y, 1) = c.g;
        img.at(x, y, 2) = c.b;
      }
    }
}

static void put_px(Image& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.at(x, y, 0) = c.r;
  if (img.channels == 3) {
    img.at(x, y, 1) = c.g;
    img.at(x, y, 2) = c.b;
  }
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put_px(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_disc(Image& img, double cx, double cy, double r, Rgb c) {
  const int x0 = static_cast<int>(std::floor(cx - r)), x1 = static_cast<int>(std::ceil(cx + r));
  const int y0 = static_cast<int>(std::floor(cy - r)), y1 = static_cast<int>(std::ceil(cy + r));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r) put_px(img, x, y, c);
    }
}

void draw_ellipse_filled(Image& img, double cx, double cy, double rx, double ry, Rgb c) {
  if (rx <= 0 || ry <= 0) return;
  const int x0 = static_cast<int>(std::floor(cx - rx)), x1 = static_cast<int>(std::ceil(cx + rx));
  const int y0 = static_cast<int>(std::floor(cy - ry)), y1 = static_cast<int>(std::ceil(cy + ry));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double nx = (x - cx) / rx, ny = (y - cy) / ry;
      if (nx * nx + ny * ny <= 1.0) put_px(img, x, y, c);
    }
}

void draw_cross(Image& img, double cx, double cy, int arm, Rgb c) {
  const int x = static_cast<int>(std::lround(cx)), y = static_cast<int>(std::lround(cy));
  draw_line(img, x - arm, y, x + arm, y, c);
  draw_line(img, x, y - arm, x, y + arm, c);
}

}  // namespace eyemark
