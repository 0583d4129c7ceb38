#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "eyemark/config.hpp"
#include "eyemark/data.hpp"
#include "eyemark/image.hpp"
#include "eyemark/log.hpp"
#include "eyemark/metrics.hpp"
#include "eyemark/model.hpp"
#include "eyemark/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace eyemark;

namespace {

// The --checkpoint flag names the tensor binary; the manifest rides along
// as the same path with a .json extension.
std::string manifest_for(const std::string& checkpoint) {
  fs::path p(checkpoint);
  p.replace_extension(".json");
  return p.string();
}

Settings resolve_settings(const std::string& config_path) {
  Config cfg = config_path.empty() ? Config() : Config::parse_file(config_path);
  Settings s = settings_from(cfg);
  return s;
}

void log_settings(const Settings& s) { LOG_INFO("resolved config:\n" << describe(s)); }

// Fresh verb directory under out_dir; reruns never see stale artifacts.
fs::path fresh_dir(const std::string& out_dir, const char* verb) {
  fs::path vdir = fs::path(out_dir) / verb;
  fs::remove_all(vdir);
  fs::create_directories(vdir);
  return vdir;
}

// Runs one verb; on failure removes its partial outputs and reports the
// cause on one line.
template <typename Fn>
int guarded(const fs::path& vdir, Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove_all(vdir, ec);
    std::cerr << "eyemark: " << e.what() << "\n";
    return 1;
  }
}

Tensor batch_images(const std::vector<TrainSample>& samples, size_t start, size_t count) {
  const int S = samples[start].image.extent(1);
  Tensor batch({static_cast<int>(count), 3, S, S});
  const long long chw = 3LL * S * S;
  for (size_t b = 0; b < count; ++b)
    std::copy(samples[start + b].image.data(), samples[start + b].image.data() + chw,
              batch.data() + static_cast<long long>(b) * chw);
  return batch;
}

// Square model-input tensor from an arbitrary image, channels replicated
// when the source is grayscale.
Tensor frame_tensor(const Image& img, int input_size) {
  Image frame = img;
  if (img.width != input_size || img.height != input_size)
    frame = crop_resize_image(img, 0, 0, img.width, img.height, input_size, input_size);
  const Tensor planes = image_to_tensor(frame);  // [1,C,S,S]
  const int C = planes.extent(1);
  Tensor out({1, 3, input_size, input_size});
  const long long hw = static_cast<long long>(input_size) * input_size;
  for (int c = 0; c < 3; ++c) {
    const double* src = planes.data() + (C == 1 ? 0 : c) * hw;
    std::copy(src, src + hw, out.data() + c * hw);
  }
  return out;
}

// Unique output stems for a list of input images; a repeated stem would
// silently overwrite its sibling's artifact.
std::vector<std::string> output_stems(const std::vector<std::string>& images) {
  std::vector<std::string> stems;
  std::set<std::string> seen;
  for (const std::string& path : images) {
    std::string stem = fs::path(path).stem().string();
    if (!seen.insert(stem).second)
      throw std::invalid_argument("duplicate input stem '" + stem + "'");
    stems.push_back(stem);
  }
  return stems;
}

int run_preprocess(const Settings& s, const std::string& raw_dir, const std::string& out_dir) {
  const fs::path vdir = fresh_dir(out_dir, "preprocess");
  return guarded(vdir, [&] {
    PipelineCounts counts{};
    const auto records = preprocess_raw(raw_dir, vdir.string(), s.model.input_size, counts);
    write_manifest((vdir / "manifest.jsonl").string(), records);
    LOG_INFO("preprocess: " << records.size() << " records written, " << counts.dropped
                            << " dropped, " << counts.skipped_files << " files skipped");
  });
}

int run_augment(const Settings& s, const std::string& manifest, const std::string& out_dir) {
  const fs::path vdir = fresh_dir(out_dir, "augment");
  return guarded(vdir, [&] {
    const int S = s.model.input_size;
    const auto sources = read_manifest(manifest, S, S);
    PipelineCounts counts{};
    const auto records = augment_records(sources, vdir.string(), counts);
    write_manifest((vdir / "manifest.jsonl").string(), records);
    const int passed = static_cast<int>(records.size()) - counts.hflip - counts.rotations -
                       counts.blur;
    LOG_INFO("augment: " << records.size() << " records (originals " << passed << ", flipped "
                         << counts.hflip << ", rotated " << counts.rotations << ", blurred "
                         << counts.blur << ", dropped " << counts.dropped << ")");
  });
}

int run_train(const Settings& s, const std::string& train_manifest,
              const std::string& val_manifest, const std::string& out_dir) {
  const fs::path vdir = fresh_dir(out_dir, "train");
  return guarded(vdir, [&] {
    const int S = s.model.input_size;
    const auto train_data = load_train_samples(read_manifest(train_manifest, S, S), S);
    const auto val_data = load_train_samples(read_manifest(val_manifest, S, S), S);
    LocalEyenet model(s.model);
    const TrainResult res =
        run_training(model, train_data, val_data, s.train, (vdir / "metrics.csv").string(),
                     (vdir / "checkpoint.bin").string(), (vdir / "checkpoint.json").string());
    if (res.halted_early)
      LOG_ERROR("training halted early: " << res.halt_reason);
    else
      LOG_INFO("train: " << res.history.size() << " epochs, checkpoint at "
                         << (vdir / "checkpoint.bin").string());
  });
}

int run_eval(const Settings& s, const std::string& manifest, const std::string& checkpoint,
             const std::string& out_dir) {
  const fs::path vdir = fresh_dir(out_dir, "eval");
  return guarded(vdir, [&] {
    const int S = s.model.input_size;
    const auto samples = load_train_samples(read_manifest(manifest, S, S), S);
    LocalEyenet model(s.model);
    model.load(checkpoint, manifest_for(checkpoint));

    std::vector<LandmarkSet> pred, gt;
    pred.reserve(samples.size());
    gt.reserve(samples.size());
    for (size_t start = 0; start < samples.size(); start += 8) {
      const size_t count = std::min<size_t>(8, samples.size() - start);
      const InferResult r = model.infer(batch_images(samples, start, count));
      for (size_t b = 0; b < count; ++b)
        pred.push_back(coords_to_landmarks(r.coords, static_cast<int>(b), S));
    }
    for (const TrainSample& t : samples) gt.push_back(t.gt);

    const EvalReport rep = evaluate_landmarks(pred, gt, s.eval_threshold);
    write_report((vdir / "report.json").string(), rep);
    render_ced_plot((vdir / "ced.png").string(), rep);
    LOG_INFO("eval: n=" << rep.n << " excluded=" << rep.excluded << " nme_mean=" << rep.nme_mean
                        << " auc=" << rep.auc << " fr=" << rep.fr);
  });
}

int run_infer(const Settings& s, const std::vector<std::string>& images,
              const std::string& checkpoint, const std::string& out_dir) {
  const fs::path vdir = fresh_dir(out_dir, "infer");
  return guarded(vdir, [&] {
    const auto stems = output_stems(images);
    LocalEyenet model(s.model);
    model.load(checkpoint, manifest_for(checkpoint));
    for (size_t i = 0; i < images.size(); ++i) {
      const Image img = load_image(images[i]);
      const InferResult r = model.infer(frame_tensor(img, s.model.input_size));
      json out;
      out["image"] = images[i];
      out["width"] = img.width;
      out["height"] = img.height;
      json pts = json::array();
      for (int p = 0; p < kNumLandmarks; ++p)
        pts.push_back({r.coords.at3(0, p, 0) * img.width, r.coords.at3(0, p, 1) * img.height});
      out["points"] = pts;
      std::ofstream f(vdir / (stems[i] + ".json"), std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + (vdir / (stems[i] + ".json")).string());
      f << out.dump(2) << "\n";
    }
    LOG_INFO("infer: " << images.size() << " images annotated under " << vdir.string());
  });
}

// Sum of the per-landmark peak maps, blended over the resampled frame as a
// red wash with crosses at the decoded points.
Image heat_overlay(const Image& img, const InferResult& r, int input_size) {
  Image frame = img;
  if (img.width != input_size || img.height != input_size)
    frame = crop_resize_image(img, 0, 0, img.width, img.height, input_size, input_size);
  const int Hm = r.probs.extent(2), Wm = r.probs.extent(3);
  std::vector<double> heat(static_cast<size_t>(input_size) * input_size, 0.0);
  double peak = 0.0;
  for (int y = 0; y < input_size; ++y)
    for (int x = 0; x < input_size; ++x) {
      const int hy = std::min(y * Hm / input_size, Hm - 1);
      const int hx = std::min(x * Wm / input_size, Wm - 1);
      double v = 0.0;
      for (int c = 0; c < kNumLandmarks; ++c) v += r.probs.at4(0, c, hy, hx);
      heat[static_cast<size_t>(y) * input_size + x] = v;
      peak = std::max(peak, v);
    }
  Image out = Image::make(input_size, input_size, 3);
  for (int y = 0; y < input_size; ++y)
    for (int x = 0; x < input_size; ++x) {
      const double a = 0.65 * (peak > 0.0 ? heat[static_cast<size_t>(y) * input_size + x] / peak : 0.0);
      const double base[3] = {
          static_cast<double>(frame.at(x, y, 0)),
          static_cast<double>(frame.at(x, y, frame.channels == 3 ? 1 : 0)),
          static_cast<double>(frame.at(x, y, frame.channels == 3 ? 2 : 0))};
      const double tint[3] = {230.0, 40.0, 40.0};
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) =
            static_cast<uint8_t>(std::lround(base[c] + a * (tint[c] - base[c])));
    }
  for (int p = 0; p < kNumLandmarks; ++p)
    draw_cross(out, r.coords.at3(0, p, 0) * input_size, r.coords.at3(0, p, 1) * input_size, 3,
               Rgb{40, 230, 70});
  return out;
}

int run_render(const Settings& s, const std::vector<std::string>& images,
               const std::string& checkpoint, const std::string& out_dir) {
  const fs::path vdir = fresh_dir(out_dir, "render");
  return guarded(vdir, [&] {
    const auto stems = output_stems(images);
    LocalEyenet model(s.model);
    model.load(checkpoint, manifest_for(checkpoint));
    for (size_t i = 0; i < images.size(); ++i) {
      const Image img = load_image(images[i]);
      const InferResult r = model.infer(frame_tensor(img, s.model.input_size));
      save_image((vdir / (stems[i] + ".png")).string(), heat_overlay(img, r, s.model.input_size));
    }
    LOG_INFO("render: " << images.size() << " overlays under " << vdir.string());
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eyemark: eye landmark localization pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string checkpoint;
  long long seed = 0;
  double threshold = 0.0;
  std::string raw_dir, manifest, train_manifest, val_manifest;
  std::vector<std::string> images;

  std::vector<CLI::Option*> seed_opts;
  CLI::Option* threshold_opt = nullptr;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key/value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--out-dir", out_dir, "artifact root (default out)");
    seed_opts.push_back(sub->add_option("--seed", seed, "model seed override")
                            ->check(CLI::NonNegativeNumber));
  };

  CLI::App* pre = app.add_subcommand("preprocess", "crop raw annotated faces to model frames");
  pre->add_option("raw_dir", raw_dir, "directory of images with .pts and .box sidecars")
      ->required();
  add_common(pre);

  CLI::App* aug = app.add_subcommand("augment", "expand a manifest with flips, rotations, blur");
  aug->add_option("manifest", manifest, "manifest from preprocess")->required();
  add_common(aug);

  CLI::App* trn = app.add_subcommand("train", "fit the model and write a checkpoint");
  trn->add_option("train_manifest", train_manifest, "training manifest")->required();
  trn->add_option("val_manifest", val_manifest, "validation manifest")->required();
  add_common(trn);

  CLI::App* evl = app.add_subcommand("eval", "score a checkpoint against a manifest");
  evl->add_option("manifest", manifest, "manifest with ground truth")->required();
  add_common(evl);
  evl->add_option("--checkpoint", checkpoint, "checkpoint tensor binary")->required();
  threshold_opt =
      evl->add_option("--threshold", threshold, "failure threshold (default 0.05)")
          ->check(CLI::PositiveNumber);

  CLI::App* inf = app.add_subcommand("infer", "write landmark JSON for images");
  inf->add_option("images", images, "input images")->required();
  add_common(inf);
  inf->add_option("--checkpoint", checkpoint, "checkpoint tensor binary")->required();

  CLI::App* ren = app.add_subcommand("render", "write heatmap overlay PNGs for images");
  ren->add_option("images", images, "input images")->required();
  add_common(ren);
  ren->add_option("--checkpoint", checkpoint, "checkpoint tensor binary")->required();

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  CLI11_PARSE(app, argc, argv);

  try {
    Settings s = resolve_settings(config_path);
    bool seed_given = false;
    for (const CLI::Option* o : seed_opts) seed_given = seed_given || o->count() > 0;
    if (seed_given) s.model.seed = static_cast<uint64_t>(seed);
    if (threshold_opt->count()) s.eval_threshold = threshold;
    log_settings(s);

    if (pre->parsed()) return run_preprocess(s, raw_dir, out_dir);
    if (aug->parsed()) return run_augment(s, manifest, out_dir);
    if (trn->parsed()) return run_train(s, train_manifest, val_manifest, out_dir);
    if (evl->parsed()) return run_eval(s, manifest, checkpoint, out_dir);
    if (inf->parsed()) return run_infer(s, images, checkpoint, out_dir);
    if (ren->parsed()) return run_render(s, images, checkpoint, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "eyemark: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
