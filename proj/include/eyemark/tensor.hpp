#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace eyemark {

// Extents of a dense tensor. Feature maps use NCHW order.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
long long shape_numel(const Shape& s);

// Dense row-major double tensor. The one value carrier of the whole
// library: images, kernels, feature maps, heatmaps, gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);

  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int i) const { return shape_[static_cast<size_t>(i)]; }
  const Shape& shape() const { return shape_; }
  long long numel() const { return static_cast<long long>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](long long i) { return data_[static_cast<size_t>(i)]; }
  double operator[](long long i) const { return data_[static_cast<size_t>(i)]; }

  // Rank-checked accessors for the common layouts.
  double& at2(int i, int j);
  double at2(int i, int j) const;
  double& at3(int b, int i, int j);
  double at3(int b, int i, int j) const;
  double& at4(int n, int c, int h, int w);
  double at4(int n, int c, int h, int w) const;

  bool all_finite() const;
  void fill(double v);

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws std::invalid_argument with a diagnostic naming both shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace eyemark
