#pragma once

#include <string>
#include <vector>

#include "eyemark/data.hpp"
#include "eyemark/model.hpp"
#include "eyemark/optim.hpp"

namespace eyemark {

struct TrainConfig {
  RmspropConfig optim;
  int batch = 8;
  int epochs = 30;
  double divergence = 1e3;  // epoch mean loss above this halts training
};

// One example: image tensor [3,S,S] in [0,1] plus landmarks in that frame.
struct TrainSample {
  Tensor image;
  LandmarkSet gt;
};

// Loads a record's frame, resampling to input_size when the sizes differ.
TrainSample load_train_sample(const SampleRecord& rec, int input_size);
std::vector<TrainSample> load_train_samples(const std::vector<SampleRecord>& recs, int input_size);

// Decoded [N,12,2] coordinates as pixel landmarks in the input frame.
LandmarkSet coords_to_landmarks(const Tensor& coords, int row, int input_size);

// One shuffled pass with parameter updates; returns the sample-weighted
// mean of the per-stage coordinate loss. The shuffle order is a fixed
// function of (model seed, epoch).
double train_epoch(LocalEyenet& model, Rmsprop& opt, const std::vector<TrainSample>& data,
                   int batch, int epoch);

// Mean inference-mode NME; samples with a degenerate normalizer are skipped.
double validation_nme(LocalEyenet& model, const std::vector<TrainSample>& data);

struct EpochRow {
  int epoch = 0;
  double loss = 0.0;
  double val_nme = 0.0;
};

struct TrainResult {
  std::vector<EpochRow> history;
  bool halted_early = false;
  std::string halt_reason;
};

// Full loop: per-epoch shuffle, updates, validation, one CSV row per epoch
// (header epoch,loss,val_nme), checkpoint after every good epoch.
// Divergence or a non-finite gradient halts the loop with the reason
// recorded, keeping the last good checkpoint on disk.
TrainResult run_training(LocalEyenet& model, const std::vector<TrainSample>& train,
                         const std::vector<TrainSample>& val, const TrainConfig& tc,
                         const std::string& csv_path, const std::string& ckpt_tensor_path,
                         const std::string& ckpt_manifest_path);

}  // namespace eyemark
