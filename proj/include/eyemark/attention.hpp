#pragma once

#include <string>

#include "eyemark/codec.hpp"
#include "eyemark/nn.hpp"

namespace eyemark {

// Node ids of every intermediate of one attention pass, for inspection
// and oracle tests. out is the stage output F'.
struct AttentionTaps {
  int f_r = -1;     // residual-refined features        [N,C,H,W]
  int f_rc = -1;    // 12-channel coarse logits         [N,12,H,W]
  int map_p = -1;   // spatial probability of f_rc      [N,12,H,W]
  int map1 = -1;    // gated coarse prediction          [N,12,H,W]
  int sim = -1;     // row-stochastic similarity        [N,HW,HW]
  int s = -1;       // aggregated g embeddings          [N,Ce,H,W]
  int att = -1;     // transformed aggregation + f_rc   [N,12,H,W]
  int out = -1;     // att + map1                       [N,12,H,W]
};

// Inter-stage refinement: residual block, coarse 12-channel head, spatial
// probability gating, and embedded-Gaussian self-attention over positions.
// All projection kernels are bias-free 1x1 convolutions, so zeroing W_g
// collapses the attention path exactly.
class AttentionBlock {
 public:
  AttentionBlock(ParamRegistry& reg, const std::string& name, int channels, bool norm);
  AttentionTaps forward(Binder& b, int x) const;

  // Ablation hook: replace the learned similarity with the constant 1/HW.
  bool uniform_similarity = false;
  // Refuse to materialize similarity matrices past this many positions.
  int hw_cap = 4096;

 private:
  int channels_, embed_;
  ResidualBlock rb_;
  Param* k_rc_;
  Param* k_proj_;
  Param* k_phi_;
  Param* k_theta_;
  Param* k_g_;
  Param* k_w_;
};

}  // namespace eyemark
