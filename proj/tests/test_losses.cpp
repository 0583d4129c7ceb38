#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support.hpp"

#include <cmath>

#include "eyemark/loss.hpp"

using namespace eyemark;
using testsup::gradcheck;
using testsup::rand_tensor;

namespace {

double loss_value(const LossConfig& cfg, const Tensor& pr, const Tensor& gt) {
  Graph g;
  return g.value(apply_loss(g, cfg, g.input(pr), g.input(gt)))[0];
}

LossConfig make(LossConfig::Kind kind, double a = 0.0, double b = 0.0) {
  LossConfig c;
  c.kind = kind;
  if (kind == LossConfig::kHuber) c.delta = a;
  if (kind == LossConfig::kWing) {
    c.w = a;
    c.epsilon = b;
  }
  return c;
}

}  // namespace

TEST_CASE("mse pinned values and mean semantics") {
  CHECK(loss_value(make(LossConfig::kMse), Tensor::scalar(0.3), Tensor::scalar(0.0)) ==
        doctest::Approx(0.09).epsilon(1e-12));
  Tensor pr({2, 2});
  pr[0] = 0.3;
  CHECK(loss_value(make(LossConfig::kMse), pr, Tensor({2, 2})) ==
        doctest::Approx(0.09 / 4.0).epsilon(1e-12));
}

TEST_CASE("mse scales quadratically") {
  Rng rng(3);
  const Tensor gt = rand_tensor({3, 4}, rng);
  Tensor pr = gt;
  Tensor pr2 = gt;
  for (long long i = 0; i < pr.numel(); ++i) {
    const double d = rng.uniform(-1.0, 1.0);
    pr[i] += d;
    pr2[i] += 2.0 * d;
  }
  const double l1 = loss_value(make(LossConfig::kMse), pr, gt);
  const double l2 = loss_value(make(LossConfig::kMse), pr2, gt);
  CHECK(l2 == doctest::Approx(4.0 * l1).epsilon(1e-12));
}

TEST_CASE("huber pinned branch values") {
  const LossConfig c = make(LossConfig::kHuber, 1.0);
  CHECK(loss_value(c, Tensor::scalar(0.5), Tensor::scalar(0.0)) ==
        doctest::Approx(0.125).epsilon(1e-12));
  CHECK(loss_value(c, Tensor::scalar(2.0), Tensor::scalar(0.0)) ==
        doctest::Approx(1.5).epsilon(1e-12));
  CHECK(loss_value(c, Tensor::scalar(-2.0), Tensor::scalar(0.0)) ==
        doctest::Approx(1.5).epsilon(1e-12));
  CHECK(loss_value(c, Tensor::scalar(1.0), Tensor::scalar(0.0)) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("huber is continuous at the knee") {
  for (double delta : {0.3, 1.0, 2.5}) {
    const LossConfig c = make(LossConfig::kHuber, delta);
    const double lo = loss_value(c, Tensor::scalar(delta - 1e-10), Tensor::scalar(0.0));
    const double hi = loss_value(c, Tensor::scalar(delta + 1e-10), Tensor::scalar(0.0));
    CHECK(std::abs(hi - lo) <= 1e-9);
    CHECK(loss_value(c, Tensor::scalar(delta), Tensor::scalar(0.0)) ==
          doctest::Approx(delta * delta / 2.0).epsilon(1e-12));
  }
}

TEST_CASE("wing pinned branch values") {
  const LossConfig c = make(LossConfig::kWing, 10.0, 2.0);
  CHECK(loss_value(c, Tensor::scalar(1.0), Tensor::scalar(0.0)) ==
        doctest::Approx(10.0 * std::log(1.5)).epsilon(1e-12));
  const double at_w = 10.0 * std::log(6.0);
  CHECK(loss_value(c, Tensor::scalar(10.0), Tensor::scalar(0.0)) ==
        doctest::Approx(at_w).epsilon(1e-12));
  CHECK(loss_value(c, Tensor::scalar(-10.0), Tensor::scalar(0.0)) ==
        doctest::Approx(at_w).epsilon(1e-12));
  // Linear branch: |d| - C with C = w - w*log(1 + w/eps).
  CHECK(wing_linear_offset(10.0, 2.0) ==
        doctest::Approx(10.0 - 10.0 * std::log(6.0)).epsilon(1e-12));
  CHECK(loss_value(c, Tensor::scalar(15.0), Tensor::scalar(0.0)) ==
        doctest::Approx(15.0 - wing_linear_offset(10.0, 2.0)).epsilon(1e-12));
}

TEST_CASE("wing branches agree at the switch for random parameters") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const double w = rng.uniform(0.05, 2.0);
    const double eps = rng.uniform(0.01, 1.0);
    CAPTURE(w);
    CAPTURE(eps);
    const LossConfig c = make(LossConfig::kWing, w, eps);
    const double lo = loss_value(c, Tensor::scalar(w * (1.0 - 1e-11)), Tensor::scalar(0.0));
    const double hi = loss_value(c, Tensor::scalar(w * (1.0 + 1e-11)), Tensor::scalar(0.0));
    CHECK(std::abs(hi - lo) <= 1e-9);
  }
}

TEST_CASE("loss gradients match finite differences away from the knees") {
  Rng rng(13);
  Tensor gt = rand_tensor({2, 3}, rng);
  Tensor pr = gt;
  for (long long i = 0; i < pr.numel(); ++i) pr[i] += (i % 2 ? 0.4 : -2.3);

  for (auto cfg : {make(LossConfig::kMse), make(LossConfig::kHuber, 1.0),
                   make(LossConfig::kWing, 1.0, 0.5)}) {
    CAPTURE(cfg.kind);
    const double err = gradcheck(
        [&](Graph& g, const std::vector<int>& ids) { return apply_loss(g, cfg, ids[0], g.input(gt)); },
        {pr});
    CHECK(err < 1e-6);
  }
}

TEST_CASE("losses reject malformed arguments") {
  Graph g;
  const int a = g.input(Tensor({2, 2}));
  const int bb = g.input(Tensor({2, 3}));
  CHECK_THROWS_AS(g.mse_loss(a, bb), std::invalid_argument);
  CHECK_THROWS_AS(g.huber_loss(a, a, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(g.huber_loss(a, a, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(g.wing_loss(a, a, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(g.wing_loss(a, a, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("apply_loss dispatches on kind") {
  Rng rng(17);
  const Tensor pr = rand_tensor({4}, rng);
  const Tensor gt = rand_tensor({4}, rng);
  Graph g;
  const int p = g.input(pr), t = g.input(gt);
  CHECK(loss_value(make(LossConfig::kMse), pr, gt) == g.value(g.mse_loss(p, t))[0]);
  CHECK(loss_value(make(LossConfig::kHuber, 0.7), pr, gt) == g.value(g.huber_loss(p, t, 0.7))[0]);
  CHECK(loss_value(make(LossConfig::kWing, 0.9, 0.2), pr, gt) ==
        g.value(g.wing_loss(p, t, 0.9, 0.2))[0]);
}

TEST_CASE("loss kind names round-trip") {
  for (auto k : {LossConfig::kMse, LossConfig::kHuber, LossConfig::kWing})
    CHECK(parse_loss_kind(loss_kind_name(k)) == k);
  CHECK_THROWS_AS(parse_loss_kind("l2"), std::invalid_argument);
}

TEST_CASE("default wing parameters are the pixel-space values over the heatmap extent") {
  const LossConfig c;
  CHECK(c.kind == LossConfig::kWing);
  CHECK(c.w == 10.0 / 64.0);
  CHECK(c.epsilon == 2.0 / 64.0);
}
