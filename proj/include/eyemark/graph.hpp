#pragma once

#include <functional>
#include <vector>

#include "eyemark/tensor.hpp"

namespace eyemark {

// Running statistics of one batchnorm layer. Owned by the layer, updated
// as a side effect of recording a training-mode batchnorm node; the
// forward value never depends on the update, so replaying a graph is pure.
struct BatchNormStats {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  bool initialized = false;
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction; backward() walks the tape once in
// reverse. A Graph instance must stay on one thread between record and
// backward. Values are computed eagerly at record time.
class Graph {
 public:
  Graph() = default;
  // Backward closures capture this, so the tape cannot relocate.
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  int input(Tensor value, bool requires_grad = false);

  // Convolution family. Kernels are [Cout,Cin,kh,kw]; depthwise kernels
  // are [C,1,kh,kw]. Cross-correlation, no kernel flip.
  int conv2d(int x, int kernel, int stride, int padding);
  int depthwise_conv2d(int x, int kernel, int stride, int padding);
  int maxpool2x2(int x);
  int upsample2x_nearest(int x);

  // Softmax over the trailing H,W extents, one distribution per (n,c)
  // slice. Max-subtracted for stability.
  int spatial_softmax(int x);

  // Elementwise and shape ops.
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);  // Hadamard
  int scale(int a, double c);
  int relu(int a);
  int concat_channels(int a, int b);        // axis 1 of NCHW
  int bias_add(int x, int bias);            // bias [C] broadcast over N,H,W
  int reshape(int x, Shape shape);
  int reduce_spatial_sum(int x);            // [N,C,H,W] -> [N,C]
  int sum_all(int x);                       // -> [1]
  int stack_last2(int a, int b);            // two [N,C] -> [N,C,2]

  // matmul: rank-2 [M,K]x[K,N] or batched rank-3 [B,M,K]x[B,K,N], with
  // optional transposition of either operand's trailing two extents.
  int matmul(int a, int b, bool transpose_a = false, bool transpose_b = false);

  // Batchnorm over (N,H,W) per channel. gamma/beta are [C] nodes. In
  // training mode batch statistics are used and, when stats is non-null,
  // folded into the running statistics with the given momentum.
  int batchnorm(int x, int gamma, int beta, BatchNormStats* stats, bool training, double momentum = 0.9,
                double eps = 1e-5);

  // Coordinate-regression losses; reduce to a [1] scalar as the mean of
  // the elementwise penalty over all entries. gt is typically a no-grad
  // leaf.
  int mse_loss(int pr, int gt);
  int huber_loss(int pr, int gt, double delta);
  int wing_loss(int pr, int gt, double w, double epsilon);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  bool has_grad(int id) const;
  const Tensor& grad(int id) const;

  // Seeds d(loss)/d(loss)=1 and accumulates gradients for every node the
  // loss depends on. loss must be scalar.
  void backward(int loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_live = false;
    bool requires_grad = false;
    std::function<void()> backward_fn;  // empty for leaves
  };

  int emit(Tensor value, bool requires_grad, std::function<void()> backward_fn);
  Tensor& grad_buf(int id);
  // Accumulate g into node id's grad if it participates in backward.
  void accum(int id, const Tensor& g);
  void accum_at(int id, long long flat_index, double g);

  std::vector<Node> nodes_;
  bool backward_done_ = false;

  friend struct GradAccess;
};

}  // namespace eyemark
