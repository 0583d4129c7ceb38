#include "eyemark/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "eyemark/image.hpp"
#include "eyemark/log.hpp"
#include "eyemark/metrics.hpp"
#include "eyemark/rng.hpp"

namespace eyemark {

TrainSample load_train_sample(const SampleRecord& rec, int input_size) {
  if (input_size <= 0) throw std::invalid_argument("load_train_sample: input size must be positive");
  Image img = load_image(rec.image);
  LandmarkSet lm = rec.landmarks;
  lm.frame_w = img.width;
  lm.frame_h = img.height;
  if (img.width != input_size || img.height != input_size) {
    const FaceBox full{0, 0, static_cast<double>(img.width), static_cast<double>(img.height)};
    lm = crop_resize_landmarks(lm, full, input_size, input_size);
    img = crop_resize_image(img, 0, 0, img.width, img.height, input_size, input_size);
  }

  const Tensor planes = image_to_tensor(img);  // [1,C,S,S]
  const int C = planes.extent(1);
  TrainSample s;
  s.image = Tensor({3, input_size, input_size});
  const long long hw = static_cast<long long>(input_size) * input_size;
  for (int c = 0; c < 3; ++c) {
    const double* src = planes.data() + (C == 1 ? 0 : c) * hw;
    std::copy(src, src + hw, s.image.data() + c * hw);
  }
  s.gt = lm;
  return s;
}

std::vector<TrainSample> load_train_samples(const std::vector<SampleRecord>& recs, int input_size) {
  std::vector<TrainSample> out;
  out.reserve(recs.size());
  for (const SampleRecord& r : recs) out.push_back(load_train_sample(r, input_size));
  return out;
}

LandmarkSet coords_to_landmarks(const Tensor& coords, int row, int input_size) {
  if (coords.rank() != 3 || coords.extent(1) != kNumLandmarks || coords.extent(2) != 2)
    throw std::invalid_argument("coords_to_landmarks: expected [N,12,2]");
  LandmarkSet lm;
  lm.frame_w = input_size;
  lm.frame_h = input_size;
  for (int i = 0; i < kNumLandmarks; ++i) {
    lm.points[static_cast<size_t>(i)][0] = coords.at3(row, i, 0) * input_size;
    lm.points[static_cast<size_t>(i)][1] = coords.at3(row, i, 1) * input_size;
  }
  return lm;
}

namespace {

// [B,3,S,S] batch and matching [B,12,2] normalized targets.
void assemble_batch(const std::vector<TrainSample>& data, const std::vector<int>& order,
                    size_t start, size_t count, int input_size, Tensor& images, Tensor& targets) {
  const int S = input_size;
  images = Tensor({static_cast<int>(count), 3, S, S});
  targets = Tensor({static_cast<int>(count), kNumLandmarks, 2});
  const long long chw = 3LL * S * S;
  for (size_t b = 0; b < count; ++b) {
    const TrainSample& s = data[static_cast<size_t>(order[start + b])];
    if (s.image.numel() != chw)
      throw std::invalid_argument("train: sample image does not match the configured input size");
    std::copy(s.image.data(), s.image.data() + chw, images.data() + static_cast<long long>(b) * chw);
    for (int i = 0; i < kNumLandmarks; ++i) {
      targets.at3(static_cast<int>(b), i, 0) = s.gt.points[static_cast<size_t>(i)][0] / S;
      targets.at3(static_cast<int>(b), i, 1) = s.gt.points[static_cast<size_t>(i)][1] / S;
    }
  }
}

int staged_loss(Graph& g, const LossConfig& cfg, const ForwardNodes& nodes, int gt) {
  int total = -1;
  for (int c : nodes.stage_coords) {
    const int l = apply_loss(g, cfg, c, gt);
    total = total < 0 ? l : g.add(total, l);
  }
  const int stages = static_cast<int>(nodes.stage_coords.size());
  return stages > 1 ? g.scale(total, 1.0 / stages) : total;
}

}  // namespace

double train_epoch(LocalEyenet& model, Rmsprop& opt, const std::vector<TrainSample>& data,
                   int batch, int epoch) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (batch <= 0) throw std::invalid_argument("train: batch size must be positive");
  const int S = model.config().input_size;

  std::vector<int> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng shuffle(substream_seed(model.config().seed, "shuffle:" + std::to_string(epoch)));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(shuffle.next_below(i))]);

  double total = 0.0;
  for (size_t start = 0; start < data.size(); start += static_cast<size_t>(batch)) {
    const size_t count = std::min(static_cast<size_t>(batch), data.size() - start);
    Tensor images, targets;
    assemble_batch(data, order, start, count, S, images, targets);

    Graph g;
    Binder b(g, true);
    const int in = g.input(std::move(images));
    const ForwardNodes nodes = model.forward(b, in);
    const int gt = g.input(std::move(targets));
    const int loss = staged_loss(g, model.config().loss, nodes, gt);
    g.backward(loss);

    for (const auto& [param, node] : b.bound()) {
      if (!g.has_grad(node))
        throw std::runtime_error("train: parameter '" + param->name + "' received no gradient");
      opt.update(*param, g.grad(node));
    }
    total += g.value(loss)[0] * static_cast<double>(count);
  }
  return total / static_cast<double>(data.size());
}

double validation_nme(LocalEyenet& model, const std::vector<TrainSample>& data) {
  if (data.empty()) throw std::invalid_argument("validate: empty dataset");
  const int S = model.config().input_size;
  const long long chw = 3LL * S * S;

  double total = 0.0;
  int scored = 0;
  const size_t batch = 8;
  for (size_t start = 0; start < data.size(); start += batch) {
    const size_t count = std::min(batch, data.size() - start);
    Tensor images({static_cast<int>(count), 3, S, S});
    for (size_t b = 0; b < count; ++b)
      std::copy(data[start + b].image.data(), data[start + b].image.data() + chw,
                images.data() + static_cast<long long>(b) * chw);
    const InferResult out = model.infer(images);
    for (size_t b = 0; b < count; ++b) {
      const LandmarkSet& gt = data[start + b].gt;
      if (!(interocular(gt) > 0.0)) continue;
      total += sample_nme(coords_to_landmarks(out.coords, static_cast<int>(b), S), gt);
      ++scored;
    }
  }
  if (scored == 0) throw std::invalid_argument("validate: no sample has a usable normalizer");
  return total / scored;
}

TrainResult run_training(LocalEyenet& model, const std::vector<TrainSample>& train,
                         const std::vector<TrainSample>& val, const TrainConfig& tc,
                         const std::string& csv_path, const std::string& ckpt_tensor_path,
                         const std::string& ckpt_manifest_path) {
  if (tc.epochs <= 0) throw std::invalid_argument("train: epochs must be positive");
  Rmsprop opt(tc.optim);
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write metrics log " + csv_path);
  csv << "epoch,loss,val_nme\n";

  TrainResult result;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    double loss = 0.0;
    try {
      loss = train_epoch(model, opt, train, tc.batch, epoch);
    } catch (const std::runtime_error& e) {
      result.halted_early = true;
      result.halt_reason = e.what();
      LOG_ERROR("training halted: " << e.what());
      break;
    }
    if (!std::isfinite(loss) || loss > tc.divergence) {
      result.halted_early = true;
      result.halt_reason = "diverged: epoch " + std::to_string(epoch) + " mean loss " +
                           std::to_string(loss);
      LOG_ERROR("training halted: " << result.halt_reason);
      break;
    }
    const double nme = validation_nme(model, val);
    char row[96];
    std::snprintf(row, sizeof(row), "%d,%.17g,%.17g\n", epoch, loss, nme);
    csv << row;
    csv.flush();
    result.history.push_back({epoch, loss, nme});
    model.save(ckpt_tensor_path, ckpt_manifest_path);
    LOG_INFO("epoch " << epoch << " loss " << loss << " val_nme " << nme);
  }
  if (!csv) throw std::runtime_error("write failed for metrics log " + csv_path);
  return result;
}

}  // namespace eyemark
