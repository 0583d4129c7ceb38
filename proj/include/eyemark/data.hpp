#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "eyemark/codec.hpp"

namespace eyemark {

// 68-point annotation file: "version:" and "n_points:" headers, then the
// coordinate pairs between braces.
struct PtsAnnotation {
  std::string version = "1";
  int n_points = 0;
  std::vector<std::array<double, 2>> points;
};

PtsAnnotation parse_pts_text(std::istream& is, const std::string& name);
PtsAnnotation parse_pts(const std::string& path);
void write_pts(const std::string& path, const PtsAnnotation& ann);

// Face rectangle sidecar: one line, "x y w h".
struct FaceBox {
  double x = 0, y = 0, w = 0, h = 0;
};

FaceBox parse_box_text(std::istream& is, const std::string& name);
FaceBox parse_box(const std::string& path);
void write_box(const std::string& path, const FaceBox& box);

// 1-based 68-point indices 37..48 become local 0..11.
LandmarkSet select_eyes(const PtsAnnotation& ann, double frame_w, double frame_h);

// Landmark halves of the augmentation geometry. Image halves live in
// image.hpp; the pipeline applies both and drops records whose landmarks
// leave the frame.
LandmarkSet crop_resize_landmarks(const LandmarkSet& lm, const FaceBox& box, int out_w, int out_h);
LandmarkSet hflip_landmarks(const LandmarkSet& lm);
LandmarkSet rotate_landmarks(const LandmarkSet& lm, double theta_deg);
bool landmarks_in_frame(const LandmarkSet& lm);

// Left/right eye identity map under mirroring: out[i] mirrors in[kFlipPerm[i]].
extern const std::array<int, kNumLandmarks> kFlipPerm;

struct SampleRecord {
  std::string image;  // path of the written frame
  FaceBox box;        // face rectangle in the raw source frame
  LandmarkSet landmarks;
  std::string tag;
};

void write_manifest(const std::string& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_manifest(const std::string& path, int frame_w = 256, int frame_h = 256);

struct PipelineCounts {
  int originals = 0;
  int hflip = 0;
  int rotations = 0;
  int blur = 0;
  int dropped = 0;
  int skipped_files = 0;
};

struct RawSample {
  std::string stem;
  std::string image_path;
  std::string pts_path;
  std::string box_path;
};

// Raw directory scan: every .pts with a readable sibling image and .box,
// sorted by path. Files without siblings are logged and skipped.
std::vector<RawSample> scan_raw_dir(const std::string& raw_dir, PipelineCounts& counts);

// Crop every raw sample to its face box at out_size and write frames under
// out_root/original/. Records whose landmarks fall outside the box are
// dropped with a logged reason.
std::vector<SampleRecord> preprocess_raw(const std::string& raw_dir, const std::string& out_root,
                                         int out_size, PipelineCounts& counts);

// One flip, four rotations, one blur per source record, minus drops;
// frames written under out_root/<tag>/. Returns sources plus the generated
// records, grouped per source in a fixed tag order.
std::vector<SampleRecord> augment_records(const std::vector<SampleRecord>& sources,
                                          const std::string& out_root, PipelineCounts& counts);

}  // namespace eyemark
