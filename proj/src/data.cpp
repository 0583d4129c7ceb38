#include "eyemark/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "eyemark/image.hpp"
#include "eyemark/log.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace eyemark {

const std::array<int, kNumLandmarks> kFlipPerm = {9, 8, 7, 6, 11, 10, 3, 2, 1, 0, 5, 4};

namespace {

[[noreturn]] void pts_error(const std::string& name, int line, const std::string& what) {
  throw std::runtime_error(name + ":" + std::to_string(line) + ": " + what);
}

std::string next_line(std::istream& is, const std::string& name, int& line) {
  std::string s;
  if (!std::getline(is, s)) pts_error(name, line + 1, "unexpected end of file");
  ++line;
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

PtsAnnotation parse_pts_text(std::istream& is, const std::string& name) {
  int line = 0;
  PtsAnnotation ann;

  std::string s = next_line(is, name, line);
  if (s.rfind("version:", 0) != 0) pts_error(name, line, "expected 'version:' header");
  std::istringstream vs(s.substr(8));
  vs >> ann.version;
  if (ann.version.empty()) pts_error(name, line, "empty version");

  s = next_line(is, name, line);
  if (s.rfind("n_points:", 0) != 0) pts_error(name, line, "expected 'n_points:' header");
  std::istringstream ns(s.substr(9));
  if (!(ns >> ann.n_points) || ann.n_points <= 0) pts_error(name, line, "bad n_points value");

  s = next_line(is, name, line);
  if (s != "{") pts_error(name, line, "expected '{'");

  ann.points.reserve(static_cast<size_t>(ann.n_points));
  for (int i = 0; i < ann.n_points; ++i) {
    s = next_line(is, name, line);
    if (s == "}") pts_error(name, line, "point count mismatch: expected " + std::to_string(ann.n_points) +
                                            ", got " + std::to_string(i));
    std::istringstream ps(s);
    double x, y;
    std::string extra;
    if (!(ps >> x >> y) || (ps >> extra))
      pts_error(name, line, "expected two numeric coordinates, got '" + s + "'");
    if (!std::isfinite(x) || !std::isfinite(y)) pts_error(name, line, "non-finite coordinate");
    ann.points.push_back({x, y});
  }
  s = next_line(is, name, line);
  if (s != "}") pts_error(name, line, "point count mismatch: more points than n_points");
  return ann;
}

PtsAnnotation parse_pts(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open pts file " + path);
  return parse_pts_text(f, path);
}

void write_pts(const std::string& path, const PtsAnnotation& ann) {
  if (static_cast<int>(ann.points.size()) != ann.n_points)
    throw std::invalid_argument("write_pts: n_points does not match point count");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write pts file " + path);
  f << "version: " << ann.version << "\n";
  f << "n_points: " << ann.n_points << "\n";
  f << "{\n";
  char buf[80];
  for (const auto& p : ann.points) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f\n", p[0], p[1]);
    f << buf;
  }
  f << "}\n";
  if (!f) throw std::runtime_error("write failed for " + path);
}

FaceBox parse_box_text(std::istream& is, const std::string& name) {
  FaceBox b;
  std::string extra;
  if (!(is >> b.x >> b.y >> b.w >> b.h))
    throw std::runtime_error(name + ":1: expected 'x y w h'");
  if (is >> extra) throw std::runtime_error(name + ":1: trailing tokens after 'x y w h'");
  if (!(b.w > 0.0) || !(b.h > 0.0)) throw std::runtime_error(name + ":1: box extent must be positive");
  return b;
}

FaceBox parse_box(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open box file " + path);
  return parse_box_text(f, path);
}

void write_box(const std::string& path, const FaceBox& box) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write box file " + path);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f\n", box.x, box.y, box.w, box.h);
  f << buf;
}

LandmarkSet select_eyes(const PtsAnnotation& ann, double frame_w, double frame_h) {
  if (static_cast<int>(ann.points.size()) < 48)
    throw std::invalid_argument("select_eyes: annotation has fewer than 48 points");
  LandmarkSet lm;
  lm.frame_w = frame_w;
  lm.frame_h = frame_h;
  for (int i = 0; i < kNumLandmarks; ++i) lm.points[static_cast<size_t>(i)] = ann.points[static_cast<size_t>(36 + i)];
  return lm;
}

LandmarkSet crop_resize_landmarks(const LandmarkSet& lm, const FaceBox& box, int out_w, int out_h) {
  if (box.w <= 0.0 || box.h <= 0.0) throw std::invalid_argument("crop_resize: box extent must be positive");
  LandmarkSet out;
  out.frame_w = out_w;
  out.frame_h = out_h;
  for (size_t i = 0; i < lm.points.size(); ++i) {
    out.points[i][0] = (lm.points[i][0] - box.x) * out_w / box.w;
    out.points[i][1] = (lm.points[i][1] - box.y) * out_h / box.h;
  }
  return out;
}

LandmarkSet hflip_landmarks(const LandmarkSet& lm) {
  LandmarkSet out;
  out.frame_w = lm.frame_w;
  out.frame_h = lm.frame_h;
  for (int i = 0; i < kNumLandmarks; ++i) {
    const auto& src = lm.points[static_cast<size_t>(kFlipPerm[static_cast<size_t>(i)])];
    out.points[static_cast<size_t>(i)] = {lm.frame_w - src[0], src[1]};
  }
  return out;
}

LandmarkSet rotate_landmarks(const LandmarkSet& lm, double theta_deg) {
  const double t = theta_deg * std::acos(-1.0) / 180.0;
  const double co = std::cos(t), si = std::sin(t);
  const double cx = (lm.frame_w - 1.0) / 2.0, cy = (lm.frame_h - 1.0) / 2.0;
  LandmarkSet out;
  out.frame_w = lm.frame_w;
  out.frame_h = lm.frame_h;
  for (size_t i = 0; i < lm.points.size(); ++i) {
    const double dx = lm.points[i][0] - cx, dy = lm.points[i][1] - cy;
    out.points[i][0] = dx * co + dy * si + cx;
    out.points[i][1] = -dx * si + dy * co + cy;
  }
  return out;
}

bool landmarks_in_frame(const LandmarkSet& lm) {
  for (const auto& p : lm.points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) return false;
    if (p[0] < 0.0 || p[0] >= lm.frame_w || p[1] < 0.0 || p[1] >= lm.frame_h) return false;
  }
  return true;
}

void write_manifest(const std::string& path, const std::vector<SampleRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest " + path);
  for (const SampleRecord& r : records) {
    json points = json::array();
    for (const auto& p : r.landmarks.points) points.push_back({p[0], p[1]});
    const json j = {{"image", r.image},
                    {"box", {r.box.x, r.box.y, r.box.w, r.box.h}},
                    {"points", points},
                    {"tag", r.tag}};
    f << j.dump() << "\n";
  }
  if (!f) throw std::runtime_error("write failed for manifest " + path);
}

std::vector<SampleRecord> read_manifest(const std::string& path, int frame_w, int frame_h) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path);
  std::vector<SampleRecord> out;
  std::string line;
  int ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(ln) + ": " + e.what());
    }
    SampleRecord r;
    r.image = j.at("image").get<std::string>();
    const auto& b = j.at("box");
    r.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
    const auto& pts = j.at("points");
    if (pts.size() != kNumLandmarks)
      throw std::runtime_error(path + ":" + std::to_string(ln) + ": expected 12 points");
    r.landmarks.frame_w = frame_w;
    r.landmarks.frame_h = frame_h;
    for (size_t i = 0; i < kNumLandmarks; ++i)
      r.landmarks.points[i] = {pts.at(i).at(0).get<double>(), pts.at(i).at(1).get<double>()};
    r.tag = j.at("tag").get<std::string>();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

bool is_image_ext(const std::string& ext) {
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::vector<RawSample> scan_raw_dir(const std::string& raw_dir, PipelineCounts& counts) {
  if (!fs::is_directory(raw_dir)) throw std::runtime_error("raw directory not found: " + raw_dir);
  std::vector<fs::path> pts_files;
  for (const auto& e : fs::directory_iterator(raw_dir))
    if (e.is_regular_file() && e.path().extension() == ".pts") pts_files.push_back(e.path());
  std::sort(pts_files.begin(), pts_files.end());

  std::vector<RawSample> out;
  for (const fs::path& p : pts_files) {
    RawSample s;
    s.stem = p.stem().string();
    s.pts_path = p.string();
    for (const char* ext : {".png", ".jpg", ".jpeg"}) {
      fs::path img = p;
      img.replace_extension(ext);
      if (fs::is_regular_file(img)) {
        s.image_path = img.string();
        break;
      }
    }
    fs::path box = p;
    box.replace_extension(".box");
    if (fs::is_regular_file(box)) s.box_path = box.string();
    if (s.image_path.empty() || s.box_path.empty()) {
      LOG_INFO("skipping " << p.string() << ": missing image or box sidecar");
      ++counts.skipped_files;
      continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

bool landmarks_in_box(const LandmarkSet& lm, const FaceBox& b) {
  for (const auto& p : lm.points)
    if (p[0] < b.x || p[0] >= b.x + b.w || p[1] < b.y || p[1] >= b.y + b.h) return false;
  return true;
}

std::string tag_dir(const std::string& out_root, const std::string& tag) {
  const fs::path d = fs::path(out_root) / tag;
  fs::create_directories(d);
  return d.string();
}

}  // namespace

std::vector<SampleRecord> preprocess_raw(const std::string& raw_dir, const std::string& out_root,
                                         int out_size, PipelineCounts& counts) {
  if (out_size <= 0) throw std::invalid_argument("preprocess: out_size must be positive");
  std::vector<SampleRecord> out;
  const std::string dir = tag_dir(out_root, "original");
  for (const RawSample& s : scan_raw_dir(raw_dir, counts)) {
    Image img;
    PtsAnnotation ann;
    FaceBox box;
    try {
      img = load_image(s.image_path);
      ann = parse_pts(s.pts_path);
      box = parse_box(s.box_path);
    } catch (const std::exception& e) {
      LOG_INFO("skipping " << s.stem << ": " << e.what());
      ++counts.skipped_files;
      continue;
    }
    if (box.x < 0 || box.y < 0 || box.x + box.w > img.width || box.y + box.h > img.height) {
      LOG_INFO("dropping " << s.stem << ": face box leaves the frame");
      ++counts.dropped;
      continue;
    }
    const LandmarkSet eyes = select_eyes(ann, img.width, img.height);
    if (!landmarks_in_box(eyes, box)) {
      LOG_INFO("dropping " << s.stem << ": landmark outside the face box");
      ++counts.dropped;
      continue;
    }
    SampleRecord r;
    r.landmarks = crop_resize_landmarks(eyes, box, out_size, out_size);
    if (!landmarks_in_frame(r.landmarks)) {
      LOG_INFO("dropping " << s.stem << ": landmark outside the cropped frame");
      ++counts.dropped;
      continue;
    }
    const Image cropped = crop_resize_image(img, box.x, box.y, box.w, box.h, out_size, out_size);
    r.image = (fs::path(dir) / (s.stem + ".png")).string();
    r.box = box;
    r.tag = "original";
    save_image(r.image, cropped);
    out.push_back(std::move(r));
    ++counts.originals;
  }
  return out;
}

std::vector<SampleRecord> augment_records(const std::vector<SampleRecord>& sources,
                                          const std::string& out_root, PipelineCounts& counts) {
  std::vector<SampleRecord> out;
  struct Rot {
    const char* tag;
    double deg;
  };
  static const Rot kRots[] = {{"rot_m5", -5.0}, {"rot_p5", 5.0}, {"rot_m10", -10.0}, {"rot_p10", 10.0}};

  for (const SampleRecord& src : sources) {
    out.push_back(src);
    const Image img = load_image(src.image);
    const std::string stem = fs::path(src.image).stem().string();

    auto emit = [&](const std::string& tag, const Image& frame, const LandmarkSet& lm) {
      if (!landmarks_in_frame(lm)) {
        LOG_INFO("dropping " << tag << "/" << stem << ": landmark outside the frame");
        ++counts.dropped;
        return false;
      }
      SampleRecord r;
      r.image = (fs::path(tag_dir(out_root, tag)) / (stem + ".png")).string();
      r.box = src.box;
      r.landmarks = lm;
      r.tag = tag;
      save_image(r.image, frame);
      out.push_back(std::move(r));
      return true;
    };

    if (emit("hflip", hflip_image(img), hflip_landmarks(src.landmarks))) ++counts.hflip;
    for (const Rot& rot : kRots)
      if (emit(rot.tag, rotate_image(img, rot.deg), rotate_landmarks(src.landmarks, rot.deg)))
        ++counts.rotations;
    if (emit("blur", gaussian_blur9(img), src.landmarks)) ++counts.blur;
  }
  return out;
}

}  // namespace eyemark
