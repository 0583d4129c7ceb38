#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eyemark/attention.hpp"
#include "eyemark/codec.hpp"
#include "eyemark/loss.hpp"
#include "eyemark/nn.hpp"

namespace eyemark {

struct ModelConfig {
  int stages = 3;
  HourglassConfig hourglass;
  bool attention_enabled = true;
  bool norm_enabled = true;
  bool uniform_similarity = false;
  int input_size = 256;
  LossConfig loss;
  uint64_t seed = 1;

  int heatmap_size() const { return input_size / 4; }
};

// Node ids of one recorded forward pass.
struct ForwardNodes {
  std::vector<int> stage_logits;  // per stage, [N,12,Hm,Wm]
  std::vector<int> stage_coords;  // per stage, [N,12,2] in [0,1)^2
  std::vector<AttentionTaps> taps;  // per stage when attention is enabled
};

struct InferResult {
  Tensor coords;  // [N,12,2] normalized
  Tensor logits;  // final stage, [N,12,Hm,Wm]
  Tensor probs;   // spatial softmax of logits
};

// Stem to quarter resolution, then `stages` hourglass+refinement rounds.
// Each stage emits 12 landmark maps decoded by soft-argmax; maps re-enter
// the next stage through a learned 1x1 remap to C channels. The final
// stage's maps alone drive inference.
class LocalEyenet {
 public:
  explicit LocalEyenet(const ModelConfig& cfg);

  ForwardNodes forward(Binder& b, int images);
  InferResult infer(const Tensor& images);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& registry() { return reg_; }

  void save(const std::string& tensor_path, const std::string& manifest_path) const;
  void load(const std::string& tensor_path, const std::string& manifest_path);

 private:
  ModelConfig cfg_;
  ParamRegistry reg_;
  std::optional<Stem> stem_;
  std::vector<Hourglass> hgs_;
  std::vector<AttentionBlock> atts_;
  std::vector<ConvUnit> heads_;
  std::vector<ConvUnit> remaps_;
};

}  // namespace eyemark
