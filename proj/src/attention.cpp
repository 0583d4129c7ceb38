#include "eyemark/attention.hpp"

#include <stdexcept>

namespace eyemark {

AttentionBlock::AttentionBlock(ParamRegistry& reg, const std::string& name, int channels, bool norm)
    : channels_(channels), embed_(channels / 2), rb_(reg, name + ".refine", channels, norm) {
  k_rc_ = &reg.kernel(name + ".coarse", {kNumLandmarks, channels, 1, 1}, channels);
  k_proj_ = &reg.kernel(name + ".gate_proj", {kNumLandmarks, channels, 1, 1}, channels);
  k_phi_ = &reg.kernel(name + ".phi", {embed_, kNumLandmarks, 1, 1}, kNumLandmarks);
  k_theta_ = &reg.kernel(name + ".theta", {embed_, kNumLandmarks, 1, 1}, kNumLandmarks);
  k_g_ = &reg.kernel(name + ".g", {embed_, kNumLandmarks, 1, 1}, kNumLandmarks);
  k_w_ = &reg.kernel(name + ".w", {kNumLandmarks, embed_, 1, 1}, embed_);
}

AttentionTaps AttentionBlock::forward(Binder& b, int x) const {
  Graph& g = b.graph();
  const Tensor& xv = g.value(x);
  if (xv.rank() != 4 || xv.extent(1) != channels_)
    throw std::invalid_argument("attention: expected [N," + std::to_string(channels_) + ",H,W], got " +
                                shape_str(xv.shape()));
  const int N = xv.extent(0), H = xv.extent(2), W = xv.extent(3);
  const int HW = H * W;
  if (HW > hw_cap)
    throw std::invalid_argument("attention: " + std::to_string(HW) + " positions exceed the cap of " +
                                std::to_string(hw_cap) + "; lower the attention resolution");

  AttentionTaps t;
  t.f_r = rb_.forward(b, x);
  t.f_rc = g.conv2d(t.f_r, b(*k_rc_), 1, 0);
  t.map_p = g.spatial_softmax(t.f_rc);
  t.map1 = g.mul(t.map_p, g.conv2d(t.f_r, b(*k_proj_), 1, 0));

  const int gv = g.reshape(g.conv2d(t.f_rc, b(*k_g_), 1, 0), {N, embed_, HW});

  if (uniform_similarity) {
    t.sim = g.input(Tensor::full({N, HW, HW}, 1.0 / HW));
  } else {
    // sim[n,i,j] = phi_i . theta_j, then softmax over j per row.
    const int phi = g.reshape(g.conv2d(t.f_rc, b(*k_phi_), 1, 0), {N, embed_, HW});
    const int theta = g.reshape(g.conv2d(t.f_rc, b(*k_theta_), 1, 0), {N, embed_, HW});
    const int logits = g.matmul(phi, theta, true, false);
    t.sim = g.reshape(g.spatial_softmax(g.reshape(logits, {N, HW, HW, 1})), {N, HW, HW});
  }
  // s[n,c,i] = sum_j sim[n,i,j] * g[n,c,j]
  t.s = g.reshape(g.matmul(gv, t.sim, false, true), {N, embed_, H, W});
  t.att = g.add(g.conv2d(t.s, b(*k_w_), 1, 0), t.f_rc);
  t.out = g.add(t.att, t.map1);
  return t;
}

}  // namespace eyemark
