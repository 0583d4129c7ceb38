#include "eyemark/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace eyemark {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

long long shape_numel(const Shape& s) {
  long long n = 1;
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument("nonpositive extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<long long>(data_.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

namespace {
void check_rank(const Shape& s, int want) {
  if (static_cast<int>(s.size()) != want)
    throw std::invalid_argument("expected rank " + std::to_string(want) + " tensor, got shape " + shape_str(s));
}
}  // namespace

double& Tensor::at2(int i, int j) {
  check_rank(shape_, 2);
  return data_[static_cast<size_t>(i) * shape_[1] + j];
}
double Tensor::at2(int i, int j) const { return const_cast<Tensor*>(this)->at2(i, j); }

double& Tensor::at3(int b, int i, int j) {
  check_rank(shape_, 3);
  return data_[(static_cast<size_t>(b) * shape_[1] + i) * shape_[2] + j];
}
double Tensor::at3(int b, int i, int j) const { return const_cast<Tensor*>(this)->at3(b, i, j); }

double& Tensor::at4(int n, int c, int h, int w) {
  check_rank(shape_, 4);
  return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}
double Tensor::at4(int n, int c, int h, int w) const { return const_cast<Tensor*>(this)->at4(n, c, h, w); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

}  // namespace eyemark
