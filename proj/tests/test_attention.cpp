#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "eyemark/attention.hpp"

using namespace eyemark;
using testsup::block_gradcheck;
using testsup::max_abs_diff;
using testsup::rand_tensor;

namespace {

// Zeroing the 3x3 kernel inside the refinement block leaves only pointwise
// paths, so the block becomes an exact identity and spatially constant
// features stay constant.
void make_refine_identity(ParamRegistry& reg, const std::string& name) {
  reg.find(name + ".refine.mid.kernel")->value.fill(0.0);
}

}  // namespace

TEST_CASE("attention rejects odd channel widths at construction") {
  ParamRegistry reg(1);
  CHECK_THROWS_AS(AttentionBlock(reg, "a", 3, true), std::invalid_argument);
}

TEST_CASE("attention tap shapes") {
  ParamRegistry reg(2);
  AttentionBlock att(reg, "a", 4, true);
  Rng rng(5);
  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(rand_tensor({2, 4, 4, 4}, rng)));
  CHECK(g.value(t.f_r).same_shape(Tensor({2, 4, 4, 4})));
  CHECK(g.value(t.f_rc).same_shape(Tensor({2, 12, 4, 4})));
  CHECK(g.value(t.map_p).same_shape(Tensor({2, 12, 4, 4})));
  CHECK(g.value(t.map1).same_shape(Tensor({2, 12, 4, 4})));
  CHECK(g.value(t.sim).same_shape(Tensor({2, 16, 16})));
  CHECK(g.value(t.s).same_shape(Tensor({2, 2, 4, 4})));
  CHECK(g.value(t.att).same_shape(Tensor({2, 12, 4, 4})));
  CHECK(g.value(t.out).same_shape(Tensor({2, 12, 4, 4})));
  CHECK(g.value(t.out).all_finite());
}

TEST_CASE("zero aggregation embedding collapses attention onto the coarse logits") {
  ParamRegistry reg(3);
  AttentionBlock att(reg, "a", 4, true);
  reg.find("a.g")->value.fill(0.0);
  Rng rng(7);
  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(rand_tensor({2, 4, 4, 4}, rng)));
  CHECK(max_abs_diff(g.value(t.att), g.value(t.f_rc)) == 0.0);

  Tensor expect = g.value(t.f_rc);
  const Tensor& m1 = g.value(t.map1);
  for (long long i = 0; i < expect.numel(); ++i) expect[i] += m1[i];
  CHECK(max_abs_diff(g.value(t.out), expect) == 0.0);
}

TEST_CASE("zero embeddings give exactly uniform attention rows") {
  ParamRegistry reg(4);
  AttentionBlock att(reg, "a", 4, true);
  reg.find("a.phi")->value.fill(0.0);
  reg.find("a.theta")->value.fill(0.0);
  Rng rng(8);
  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(rand_tensor({1, 4, 4, 4}, rng)));
  CHECK(max_abs_diff(g.value(t.sim), Tensor::full({1, 16, 16}, 1.0 / 16.0)) == 0.0);
}

TEST_CASE("spatially constant features give uniform attention weights") {
  ParamRegistry reg(5);
  AttentionBlock att(reg, "a", 4, true);
  make_refine_identity(reg, "a");
  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(Tensor::full({1, 4, 4, 4}, 0.7)));
  CHECK(max_abs_diff(g.value(t.f_r), Tensor::full({1, 4, 4, 4}, 0.7)) == 0.0);
  CHECK(max_abs_diff(g.value(t.sim), Tensor::full({1, 16, 16}, 1.0 / 16.0)) <= 1e-15);
}

TEST_CASE("two-position similarity matches the closed-form softmax") {
  ParamRegistry reg(6);
  AttentionBlock att(reg, "a", 4, true);
  make_refine_identity(reg, "a");
  Param* rc = reg.find("a.coarse");
  rc->value.fill(0.0);
  for (int c = 0; c < 4; ++c) rc->value.at4(c, c, 0, 0) = 1.0;
  Param* phi = reg.find("a.phi");
  phi->value.fill(0.0);
  phi->value.at4(0, 0, 0, 0) = 1.0;
  phi->value.at4(1, 1, 0, 0) = 1.0;
  Param* theta = reg.find("a.theta");
  theta->value.fill(0.0);
  theta->value.at4(0, 2, 0, 0) = 1.0;
  theta->value.at4(1, 3, 0, 0) = 1.0;

  const double L = std::log(3.0);
  Tensor x({1, 4, 1, 2});
  x.at4(0, 0, 0, 0) = 1.0;
  x.at4(0, 3, 0, 0) = L;  // position 0: phi=(1,0), theta=(0,ln3)
  x.at4(0, 1, 0, 1) = 1.0;
  x.at4(0, 2, 0, 1) = L;  // position 1: phi=(0,1), theta=(ln3,0)

  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(x));
  const Tensor sim = g.value(t.sim);
  CHECK(std::abs(sim.at3(0, 0, 0) - 0.25) <= 1e-12);
  CHECK(std::abs(sim.at3(0, 0, 1) - 0.75) <= 1e-12);
  CHECK(std::abs(sim.at3(0, 1, 0) - 0.75) <= 1e-12);
  CHECK(std::abs(sim.at3(0, 1, 1) - 0.25) <= 1e-12);
}

TEST_CASE("aggregation matches a scripted double-loop evaluation on a 4x4 toy") {
  ParamRegistry reg(9);
  const int C = 4, Ce = 2, H = 4, W = 4, N = 2, HW = H * W;
  AttentionBlock att(reg, "a", C, true);
  Rng rng(17);
  const Tensor x = rand_tensor({N, C, H, W}, rng);

  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(x));
  const Tensor frc = g.value(t.f_rc);
  const Tensor& kphi = reg.find("a.phi")->value;
  const Tensor& ktheta = reg.find("a.theta")->value;
  const Tensor& kg = reg.find("a.g")->value;

  auto embed = [&](const Tensor& k, int n, int e, int p) {
    double acc = 0.0;
    for (int o = 0; o < 12; ++o) acc += k.at4(e, o, 0, 0) * frc.at4(n, o, p / W, p % W);
    return acc;
  };
  const Tensor sim = g.value(t.sim);
  const Tensor s = g.value(t.s);
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < HW; ++i) {
      double f[16], row = 0.0;
      for (int j = 0; j < HW; ++j) {
        double dot = 0.0;
        for (int e = 0; e < Ce; ++e) dot += embed(kphi, n, e, i) * embed(ktheta, n, e, j);
        f[j] = std::exp(dot);
        row += f[j];
      }
      for (int j = 0; j < HW; ++j) {
        CAPTURE(n);
        CAPTURE(i);
        CAPTURE(j);
        CHECK(std::abs(sim.at3(n, i, j) - f[j] / row) <= 1e-10);
      }
      for (int e = 0; e < Ce; ++e) {
        double acc = 0.0;
        for (int j = 0; j < HW; ++j) acc += f[j] / row * embed(kg, n, e, j);
        CHECK(std::abs(s.at4(n, e, i / W, i % W) - acc) <= 1e-10);
      }
    }
  }
}

TEST_CASE("attention rows are stochastic on random inputs") {
  ParamRegistry reg(10);
  AttentionBlock att(reg, "a", 4, true);
  Rng rng(19);
  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(rand_tensor({2, 4, 4, 4}, rng, -3.0, 3.0)));
  const Tensor sim = g.value(t.sim);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 16; ++i) {
      double row = 0.0;
      for (int j = 0; j < 16; ++j) {
        row += sim.at3(n, i, j);
        CHECK(sim.at3(n, i, j) >= 0.0);
      }
      CHECK(std::abs(row - 1.0) <= 1e-9);
    }
}

TEST_CASE("position cap rejects oversized attention") {
  ParamRegistry reg(11);
  AttentionBlock att(reg, "a", 4, true);
  att.hw_cap = 15;
  Graph g;
  Binder b(g, true);
  CHECK_THROWS_WITH_AS(att.forward(b, g.input(Tensor({1, 4, 4, 4}))),
                       doctest::Contains("lower the attention resolution"), std::invalid_argument);
}

TEST_CASE("gradients flow through all five parameter groups") {
  ParamRegistry reg(12);
  AttentionBlock att(reg, "a", 4, true);
  Rng rng(23);
  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(rand_tensor({2, 4, 4, 4}, rng)));
  const int loss = g.sum_all(g.mul(t.out, g.input(rand_tensor({2, 12, 4, 4}, rng))));
  g.backward(loss);
  CHECK(b.bound().size() == reg.params().size());
  for (const auto& [p, id] : b.bound()) {
    CAPTURE(p->name);
    REQUIRE(g.has_grad(id));
    CHECK(max_abs_diff(g.grad(id), Tensor(p->value.shape())) > 0.0);
  }
}

TEST_CASE("uniform-similarity ablation keeps shapes and finiteness") {
  ParamRegistry reg(13);
  AttentionBlock att(reg, "a", 4, true);
  att.uniform_similarity = true;
  Rng rng(29);
  Graph g;
  Binder b(g, true);
  const AttentionTaps t = att.forward(b, g.input(rand_tensor({2, 4, 4, 4}, rng)));
  CHECK(max_abs_diff(g.value(t.sim), Tensor::full({2, 16, 16}, 1.0 / 16.0)) == 0.0);
  CHECK(g.value(t.out).same_shape(Tensor({2, 12, 4, 4})));
  CHECK(g.value(t.out).all_finite());
  for (const auto& [p, id] : b.bound()) {
    CHECK(p->name.find(".phi") == std::string::npos);
    CHECK(p->name.find(".theta") == std::string::npos);
  }

  const int loss = g.sum_all(g.mul(t.out, g.input(rand_tensor({2, 12, 4, 4}, rng))));
  g.backward(loss);
  for (const auto& [p, id] : b.bound()) {
    CAPTURE(p->name);
    CHECK(g.has_grad(id));
  }
}

TEST_CASE("attention block gradient check") {
  for (bool uniform : {false, true}) {
    CAPTURE(uniform);
    ParamRegistry reg(14);
    AttentionBlock att(reg, "a", 4, true);
    att.uniform_similarity = uniform;
    Rng rng(31);
    const Tensor x = rand_tensor({1, 4, 3, 3}, rng);
    const double err = block_gradcheck(
        {x},
        [&](Binder& b, const std::vector<int>& id) { return att.forward(b, id[0]).out; }, rng);
    CHECK(err < 1e-4);
  }
}
