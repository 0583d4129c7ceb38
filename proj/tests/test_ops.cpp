#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "support.hpp"

#include <cmath>

using namespace eyemark;
using namespace testsup;

namespace {
Tensor run_op(const std::function<int(Graph&, int)>& op, const Tensor& x) {
  Graph g;
  return g.value(op(g, g.input(x)));
}
}  // namespace

TEST_CASE("conv2d: identity kernel") {
  Rng rng(1);
  Tensor x = rand_tensor({1, 1, 4, 4}, rng);
  Tensor k({1, 1, 1, 1});
  k[0] = 1.0;
  Graph g;
  Tensor y = g.value(g.conv2d(g.input(x), g.input(k), 1, 0));
  CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv2d: all-ones 3x3 on constant interior") {
  Tensor x = Tensor::full({1, 1, 5, 5}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Graph g;
  Tensor y = g.value(g.conv2d(g.input(x), g.input(k), 1, 1));
  CHECK(y.at4(0, 0, 2, 2) == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(y.at4(0, 0, 0, 0) == doctest::Approx(4.0).epsilon(1e-15));  // corner sees 2x2
}

TEST_CASE("conv2d matches brute-force loops") {
  Rng rng(2);
  struct Case {
    Shape x, k;
    int stride, pad;
  };
  const Case cases[] = {
      {{1, 2, 5, 5}, {3, 2, 3, 3}, 1, 1},  // pinned spec case
      {{2, 3, 8, 8}, {4, 3, 3, 3}, 2, 1},
      {{1, 1, 7, 9}, {2, 1, 5, 3}, 1, 2},
      {{2, 4, 6, 6}, {4, 4, 1, 1}, 1, 0},
      {{1, 2, 9, 9}, {2, 2, 7, 7}, 2, 3},
  };
  for (const Case& c : cases) {
    Tensor x = rand_tensor(c.x, rng);
    Tensor k = rand_tensor(c.k, rng);
    Graph g;
    Tensor y = g.value(g.conv2d(g.input(x), g.input(k), c.stride, c.pad));
    Tensor ref = conv2d_ref(x, k, c.stride, c.pad);
    CHECK(max_abs_diff(y, ref) < 1e-12);
  }
}

TEST_CASE("conv2d rejects bad arguments") {
  Graph g;
  const int x = g.input(Tensor({1, 3, 8, 8}));
  CHECK_THROWS_AS(g.conv2d(x, g.input(Tensor({2, 4, 3, 3})), 1, 1), std::invalid_argument);  // channel mismatch
  CHECK_THROWS_AS(g.conv2d(x, g.input(Tensor({2, 3, 2, 2})), 1, 1), std::invalid_argument);  // even kernel
  CHECK_THROWS_AS(g.conv2d(x, g.input(Tensor({2, 3, 3, 3})), 1, -1), std::invalid_argument);
  CHECK_THROWS_AS(g.conv2d(x, g.input(Tensor({2, 3, 3, 3})), 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(g.conv2d(x, g.input(Tensor({2, 3, 9, 9})), 1, 0), std::invalid_argument);  // kernel exceeds frame
}

TEST_CASE("depthwise: identity kernels pass input through") {
  Rng rng(3);
  Tensor x = rand_tensor({2, 3, 4, 4}, rng);
  Tensor k({3, 1, 3, 3});
  for (int c = 0; c < 3; ++c) k.at4(c, 0, 1, 1) = 1.0;
  Graph g;
  Tensor y = g.value(g.depthwise_conv2d(g.input(x), g.input(k), 1, 1));
  CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("depthwise: zero and box kernels act per channel") {
  Rng rng(4);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng);
  Tensor k({2, 1, 3, 3});
  for (int i = 0; i < 9; ++i) k[9 + i] = 1.0;  // channel 0 zero, channel 1 all-one
  Graph g;
  Tensor y = g.value(g.depthwise_conv2d(g.input(x), g.input(k), 1, 1));
  for (int h = 0; h < 4; ++h)
    for (int w = 0; w < 4; ++w) CHECK(y.at4(0, 0, h, w) == 0.0);
  Tensor ref = depthwise_ref(x, k, 1, 1);
  CHECK(max_abs_diff(y, ref) < 1e-12);
}

TEST_CASE("depthwise equals conv2d with block-diagonal kernel") {
  Rng rng(5);
  const int C = 3;
  Tensor x = rand_tensor({2, C, 6, 6}, rng);
  Tensor kd = rand_tensor({C, 1, 3, 3}, rng);
  Tensor kfull({C, C, 3, 3});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < 9; ++i) kfull[(static_cast<long long>(c) * C + c) * 9 + i] = kd[c * 9 + i];
  Graph g;
  Tensor yd = g.value(g.depthwise_conv2d(g.input(x), g.input(kd), 1, 1));
  Tensor yf = g.value(g.conv2d(g.input(x), g.input(kfull), 1, 1));
  CHECK(max_abs_diff(yd, yf) < 1e-12);
}

TEST_CASE("maxpool2x2: constants, window max, oracle, odd rejection") {
  Tensor c = Tensor::full({1, 1, 4, 4}, 3.3);
  Graph g;
  CHECK(max_abs_diff(g.value(g.maxpool2x2(g.input(c))), Tensor::full({1, 1, 2, 2}, 3.3)) == 0.0);

  Tensor w({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(g.value(g.maxpool2x2(g.input(w)))[0] == 4.0);

  Rng rng(6);
  Tensor x = rand_tensor({2, 3, 8, 8}, rng);
  CHECK(max_abs_diff(g.value(g.maxpool2x2(g.input(x))), maxpool_ref(x)) == 0.0);

  CHECK_THROWS_AS(g.maxpool2x2(g.input(Tensor({1, 1, 3, 4}))), std::invalid_argument);
}

TEST_CASE("upsample2x: replication, oracle, pool inverse") {
  Tensor one({1, 1, 1, 1}, {1.0});
  Graph g;
  CHECK(max_abs_diff(g.value(g.upsample2x_nearest(g.input(one))), Tensor::full({1, 1, 2, 2}, 1.0)) == 0.0);

  Rng rng(7);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng);
  const int up = g.upsample2x_nearest(g.input(x));
  CHECK(max_abs_diff(g.value(up), upsample_ref(x)) == 0.0);
  CHECK(max_abs_diff(g.value(g.maxpool2x2(up)), x) == 0.0);
}

TEST_CASE("spatial_softmax: uniform, shift invariance, closed form") {
  Graph g;
  Tensor z({1, 1, 2, 3});
  Tensor u = g.value(g.spatial_softmax(g.input(z)));
  for (long long i = 0; i < u.numel(); ++i) CHECK(u[i] == doctest::Approx(1.0 / 6).epsilon(1e-12));

  Rng rng(8);
  Tensor x = rand_tensor({2, 2, 4, 4}, rng);
  Tensor xs = x;
  for (long long i = 0; i < xs.numel(); ++i) xs[i] += 100.0;
  Tensor p0 = run_op([](Graph& gg, int id) { return gg.spatial_softmax(id); }, x);
  Tensor p1 = run_op([](Graph& gg, int id) { return gg.spatial_softmax(id); }, xs);
  CHECK(max_abs_diff(p0, p1) < 1e-12);

  Tensor t({1, 1, 2, 2}, {0.0, std::log(2.0), std::log(3.0), std::log(4.0)});
  Tensor pt = run_op([](Graph& gg, int id) { return gg.spatial_softmax(id); }, t);
  CHECK(pt[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(pt[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(pt[2] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(pt[3] == doctest::Approx(0.4).epsilon(1e-12));

  // distribution contract on random input
  Tensor pr = run_op([](Graph& gg, int id) { return gg.spatial_softmax(id); }, rand_tensor({3, 2, 5, 5}, rng, -5, 5));
  for (int n = 0; n < 3; ++n)
    for (int c = 0; c < 2; ++c) {
      double sum = 0.0;
      for (int i = 0; i < 25; ++i) {
        const double v = pr[(static_cast<long long>(n) * 2 + c) * 25 + i];
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("elementwise ops and identities") {
  Rng rng(9);
  Tensor x = rand_tensor({2, 2, 3, 3}, rng);
  Tensor ones = Tensor::full(x.shape(), 1.0);
  Graph g;
  CHECK(max_abs_diff(g.value(g.mul(g.input(x), g.input(ones))), x) == 0.0);

  Tensor neg({2}, {-1.0, 2.0});
  Tensor r = g.value(g.relu(g.input(neg)));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);

  Tensor y = rand_tensor(x.shape(), rng);
  Tensor s = g.value(g.add(g.input(x), g.input(y)));
  Tensor d = g.value(g.sub(g.input(s), g.input(y)));
  CHECK(max_abs_diff(d, x) < 1e-15);

  Tensor sc = g.value(g.scale(g.input(x), -2.0));
  for (long long i = 0; i < x.numel(); ++i) CHECK(sc[i] == -2.0 * x[i]);

  CHECK_THROWS_AS(g.add(g.input(Tensor({2, 3})), g.input(Tensor({3, 2}))), std::invalid_argument);
}

TEST_CASE("concat_channels stacks along axis 1") {
  Rng rng(10);
  Tensor a = rand_tensor({2, 2, 3, 3}, rng);
  Tensor b = rand_tensor({2, 1, 3, 3}, rng);
  Graph g;
  Tensor c = g.value(g.concat_channels(g.input(a), g.input(b)));
  REQUIRE(c.shape() == Shape{2, 3, 3, 3});
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 3; ++w) {
        CHECK(c.at4(n, 0, h, w) == a.at4(n, 0, h, w));
        CHECK(c.at4(n, 1, h, w) == a.at4(n, 1, h, w));
        CHECK(c.at4(n, 2, h, w) == b.at4(n, 0, h, w));
      }
  CHECK_THROWS_AS(g.concat_channels(g.input(a), g.input(Tensor({2, 1, 4, 3}))), std::invalid_argument);
}

TEST_CASE("bias_add broadcasts per channel") {
  Rng rng(11);
  Tensor x = rand_tensor({2, 3, 2, 2}, rng);
  Tensor b({3}, {1.0, -2.0, 0.5});
  Graph g;
  Tensor y = g.value(g.bias_add(g.input(x), g.input(b)));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) CHECK(y.at4(n, c, h, w) == x.at4(n, c, h, w) + b[c]);
  CHECK_THROWS_AS(g.bias_add(g.input(x), g.input(Tensor({4}))), std::invalid_argument);
}

TEST_CASE("reshape, reductions, stacking") {
  Rng rng(12);
  Tensor x = rand_tensor({2, 3, 2, 2}, rng);
  Graph g;
  Tensor r = g.value(g.reshape(g.input(x), {2, 12}));
  CHECK(r.shape() == Shape{2, 12});
  for (long long i = 0; i < x.numel(); ++i) CHECK(r[i] == x[i]);
  CHECK_THROWS_AS(g.reshape(g.input(x), {5, 5}), std::invalid_argument);

  Tensor rs = g.value(g.reduce_spatial_sum(g.input(x)));
  REQUIRE(rs.shape() == Shape{2, 3});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) acc += x.at4(n, c, h, w);
      CHECK(rs.at2(n, c) == doctest::Approx(acc).epsilon(1e-15));
    }

  double total = 0.0;
  for (long long i = 0; i < x.numel(); ++i) total += x[i];
  CHECK(g.value(g.sum_all(g.input(x)))[0] == doctest::Approx(total).epsilon(1e-15));

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor st = g.value(g.stack_last2(g.input(a), g.input(b)));
  REQUIRE(st.shape() == Shape{2, 2, 2});
  CHECK(st.at3(0, 1, 0) == 2.0);
  CHECK(st.at3(0, 1, 1) == 6.0);
}

TEST_CASE("matmul matches triple-loop reference with all flag combinations") {
  Rng rng(13);
  for (const bool ta : {false, true})
    for (const bool tb : {false, true}) {
      const Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
      const Shape sb = tb ? Shape{5, 4} : Shape{4, 5};
      Tensor a = rand_tensor(sa, rng);
      Tensor b = rand_tensor(sb, rng);
      Graph g;
      Tensor y = g.value(g.matmul(g.input(a), g.input(b), ta, tb));
      CHECK(max_abs_diff(y, matmul_ref(a, b, ta, tb)) < 1e-12);

      Tensor ab = rand_tensor({2, sa[0], sa[1]}, rng);
      Tensor bb = rand_tensor({2, sb[0], sb[1]}, rng);
      Tensor yb = g.value(g.matmul(g.input(ab), g.input(bb), ta, tb));
      CHECK(max_abs_diff(yb, matmul_ref(ab, bb, ta, tb)) < 1e-12);
    }
  Graph g;
  CHECK_THROWS_AS(g.matmul(g.input(Tensor({2, 3})), g.input(Tensor({2, 3}))), std::invalid_argument);
  CHECK_THROWS_AS(g.matmul(g.input(Tensor({2, 2, 3})), g.input(Tensor({3, 3, 4}))), std::invalid_argument);
}

TEST_CASE("batchnorm training normalizes per channel and tracks running stats") {
  Rng rng(14);
  Tensor x = rand_tensor({4, 2, 3, 3}, rng, -2.0, 5.0);
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta({2});
  BatchNormStats stats;
  stats.running_mean = Tensor({2});
  stats.running_var = Tensor::full({2}, 1.0);

  Graph g;
  Tensor y = g.value(g.batchnorm(g.input(x), g.input(gamma), g.input(beta), &stats, true));

  const long long M = 4 * 3 * 3;
  for (int c = 0; c < 2; ++c) {
    double mu = 0.0, var = 0.0, ymu = 0.0, yvar = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 3; ++w) mu += x.at4(n, c, h, w);
    mu /= static_cast<double>(M);
    for (int n = 0; n < 4; ++n)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 3; ++w) var += (x.at4(n, c, h, w) - mu) * (x.at4(n, c, h, w) - mu);
    var /= static_cast<double>(M);
    for (int n = 0; n < 4; ++n)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 3; ++w) ymu += y.at4(n, c, h, w);
    ymu /= static_cast<double>(M);
    for (int n = 0; n < 4; ++n)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 3; ++w) yvar += (y.at4(n, c, h, w) - ymu) * (y.at4(n, c, h, w) - ymu);
    yvar /= static_cast<double>(M);
    CHECK(ymu == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(std::abs(yvar - 1.0) < 1e-3);  // epsilon shifts variance slightly
    CHECK(stats.running_mean[c] == doctest::Approx(0.9 * 0.0 + 0.1 * mu).epsilon(1e-12));
    CHECK(stats.running_var[c] == doctest::Approx(0.9 * 1.0 + 0.1 * var).epsilon(1e-12));
  }
}

TEST_CASE("batchnorm of constant channel gives pure shift") {
  Tensor x = Tensor::full({2, 1, 2, 2}, 5.0);
  Tensor gamma = Tensor::full({1}, 3.0);
  Tensor beta = Tensor::full({1}, -0.5);
  Graph g;
  Tensor y = g.value(g.batchnorm(g.input(x), g.input(gamma), g.input(beta), nullptr, true));
  for (long long i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("batchnorm inference uses running statistics") {
  Tensor x = Tensor::full({1, 1, 1, 2}, 3.0);
  Tensor gamma = Tensor::full({1}, 2.0);
  Tensor beta = Tensor::full({1}, 1.0);
  BatchNormStats stats;
  stats.running_mean = Tensor::full({1}, 1.0);
  stats.running_var = Tensor::full({1}, 4.0);
  Graph g;
  Tensor y = g.value(g.batchnorm(g.input(x), g.input(gamma), g.input(beta), &stats, false));
  const double expect = 2.0 * (3.0 - 1.0) / std::sqrt(4.0 + 1e-5) + 1.0;
  CHECK(y[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(stats.running_mean[0] == 1.0);  // inference never updates
  Graph g2;
  CHECK_THROWS_AS(g2.batchnorm(g2.input(x), g2.input(gamma), g2.input(beta), nullptr, false), std::invalid_argument);
}

TEST_CASE("forward determinism: identical graphs give identical bits") {
  Rng rng(15);
  Tensor x = rand_tensor({1, 2, 6, 6}, rng);
  Tensor k = rand_tensor({2, 2, 3, 3}, rng);
  auto run = [&]() {
    Graph g;
    const int c = g.conv2d(g.input(x), g.input(k), 1, 1);
    return g.value(g.spatial_softmax(g.relu(c)));
  };
  Tensor y1 = run(), y2 = run();
  CHECK(max_abs_diff(y1, y2) == 0.0);
}

TEST_CASE("finite inputs give finite outputs across ops") {
  Rng rng(16);
  Tensor x = rand_tensor({1, 2, 4, 4}, rng, -50.0, 50.0);
  Tensor k = rand_tensor({2, 2, 3, 3}, rng, -50.0, 50.0);
  Graph g;
  const int c = g.conv2d(g.input(x), g.input(k), 1, 1);
  const int p = g.maxpool2x2(c);
  const int u = g.upsample2x_nearest(p);
  const int s = g.spatial_softmax(u);
  CHECK(g.value(c).all_finite());
  CHECK(g.value(s).all_finite());
}
