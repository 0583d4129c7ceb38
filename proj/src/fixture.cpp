#include "eyemark/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "eyemark/data.hpp"
#include "eyemark/image.hpp"
#include "eyemark/rng.hpp"

namespace fs = std::filesystem;

namespace eyemark {

namespace {

// Contour angles in degrees: leftmost, upper-left, upper-right, rightmost,
// lower-right, lower-left. The same sequence matches the 68-point ordering
// for both eyes, so the mirror permutation keeps semantic slots aligned.
constexpr double kContourDeg[6] = {180.0, 120.0, 60.0, 0.0, 300.0, 240.0};

std::array<std::array<double, 2>, 6> eye_contour(double cx, double cy, double rx, double ry) {
  std::array<std::array<double, 2>, 6> pts;
  for (int k = 0; k < 6; ++k) {
    const double t = kContourDeg[k] * std::acos(-1.0) / 180.0;
    pts[static_cast<size_t>(k)] = {cx + rx * std::cos(t), cy - ry * std::sin(t)};
  }
  return pts;
}

}  // namespace

std::vector<std::string> generate_fixture(const std::string& dir, int count, int image_size,
                                          uint64_t seed) {
  if (count <= 0) throw std::invalid_argument("fixture: count must be positive");
  if (image_size < 48) throw std::invalid_argument("fixture: image size must be at least 48");
  fs::create_directories(dir);

  const double S = image_size;
  const double pi = std::acos(-1.0);
  std::vector<std::string> stems;

  for (int i = 0; i < count; ++i) {
    Rng rng(substream_seed(seed, static_cast<uint64_t>(i)));

    // Head ellipse with enough margin that its box stays inside the frame.
    const double fcx = S * rng.uniform(0.47, 0.53);
    const double fcy = S * rng.uniform(0.48, 0.54);
    const double frx = S * rng.uniform(0.30, 0.36);
    const double fry = S * rng.uniform(0.34, 0.40);

    // Eyes above the midline; the ring they trace stays deep inside the
    // face box, so every augmentation keeps the landmarks in frame.
    const double eye_dx = S * rng.uniform(0.13, 0.17);
    const double erx = S * rng.uniform(0.075, 0.105);
    const double ery = erx * rng.uniform(0.55, 0.70);
    const double lcx = fcx - eye_dx;
    const double rcx = fcx + eye_dx;
    const double lcy = fcy - S * rng.uniform(0.06, 0.10);
    const double rcy = lcy + S * rng.uniform(-0.01, 0.01);

    Image img = Image::make(image_size, image_size, 3);
    const uint8_t bg = static_cast<uint8_t>(40 + rng.next_below(30));
    fill_rect(img, 0, 0, image_size - 1, image_size - 1,
              Rgb{bg, bg, static_cast<uint8_t>(bg + 25)});
    draw_ellipse_filled(img, fcx, fcy, frx, fry, Rgb{190, 160, 135});
    draw_line(img, static_cast<int>(fcx - frx * 0.3), static_cast<int>(fcy + fry * 0.45),
              static_cast<int>(fcx + frx * 0.3), static_cast<int>(fcy + fry * 0.45),
              Rgb{120, 60, 60});
    for (int e = 0; e < 2; ++e) {
      const double cx = e ? rcx : lcx;
      const double cy = e ? rcy : lcy;
      draw_ellipse_filled(img, cx, cy, erx, ery, Rgb{245, 245, 245});
      draw_disc(img, cx, cy, ery * 0.55, Rgb{25, 25, 30});
    }

    PtsAnnotation ann;
    ann.n_points = 68;
    ann.points.assign(68, {fcx, fcy});
    for (int j = 0; j < 17; ++j) {  // jaw arc along the lower face outline
      const double t = pi * (0.1 + 0.8 * j / 16.0);
      ann.points[static_cast<size_t>(j)] = {fcx - frx * 0.9 * std::cos(t), fcy + fry * 0.9 * std::sin(t)};
    }
    for (int j = 0; j < 5; ++j) {  // brows
      ann.points[static_cast<size_t>(17 + j)] = {lcx - erx + j * erx / 2.0, lcy - ery * 2.0};
      ann.points[static_cast<size_t>(22 + j)] = {rcx - erx + j * erx / 2.0, rcy - ery * 2.0};
    }
    for (int j = 0; j < 9; ++j)  // nose column and base
      ann.points[static_cast<size_t>(27 + j)] = {fcx, fcy - fry * 0.2 + j * fry * 0.06};
    for (int j = 0; j < 20; ++j) {  // mouth ring
      const double t = 2.0 * pi * j / 20.0;
      ann.points[static_cast<size_t>(48 + j)] = {fcx + frx * 0.25 * std::cos(t),
                                                 fcy + fry * 0.45 + fry * 0.08 * std::sin(t)};
    }
    const auto lpts = eye_contour(lcx, lcy, erx, ery);
    const auto rpts = eye_contour(rcx, rcy, erx, ery);
    for (int k = 0; k < 6; ++k) {
      ann.points[static_cast<size_t>(36 + k)] = lpts[static_cast<size_t>(k)];
      ann.points[static_cast<size_t>(42 + k)] = rpts[static_cast<size_t>(k)];
    }

    const double bx0 = std::max(0.0, fcx - frx - 2.0);
    const double by0 = std::max(0.0, fcy - fry - 2.0);
    const double bx1 = std::min(S, fcx + frx + 2.0);
    const double by1 = std::min(S, fcy + fry + 2.0);
    const FaceBox box{bx0, by0, bx1 - bx0, by1 - by0};

    char stem[32];
    std::snprintf(stem, sizeof(stem), "face_%03d", i);
    const std::string base = (fs::path(dir) / stem).string();
    save_image(base + ".png", img);
    write_pts(base + ".pts", ann);
    write_box(base + ".box", box);
    stems.emplace_back(stem);
  }
  return stems;
}

}  // namespace eyemark
