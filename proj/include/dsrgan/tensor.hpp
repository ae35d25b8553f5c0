#ifndef DSRGAN_TENSOR_HPP
#define DSRGAN_TENSOR_HPP

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsrgan {

using Shape = std::vector<int>;

inline long numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

// Dense n-d array of doubles in row-major order, optionally carrying a
// gradient of the same shape. Double precision throughout: the finite
// difference gradient checks need the head room.
struct Tensor {
  Shape shape;
  Eigen::ArrayXd values;
  Eigen::ArrayXd grad;  // size 0 until populated by backward()
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, Eigen::ArrayXd v) : shape(std::move(s)), values(std::move(v)) {
    if (numel(shape) != values.size())
      throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) {
    Eigen::ArrayXd v = Eigen::ArrayXd::Zero(numel(s));
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor full(Shape s, double value) {
    Eigen::ArrayXd v = Eigen::ArrayXd::Constant(numel(s), value);
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor scalar(double value) { return full({1}, value); }
  static Tensor from(Shape s, std::initializer_list<double> v) {
    Eigen::ArrayXd a(static_cast<long>(v.size()));
    long i = 0;
    for (double x : v) a[i++] = x;
    return Tensor(std::move(s), std::move(a));
  }

  long size() const { return values.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  bool all_finite() const { return values.isFinite().all(); }

  void zero_grad() { grad.resize(0); }
  Eigen::ArrayXd& grad_buffer() {
    if (grad.size() != values.size()) grad = Eigen::ArrayXd::Zero(values.size());
    return grad;
  }
};

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": expected shape " + shape_str(want) +
                                ", got " + shape_str(got));
}

}  // namespace dsrgan

#endif
