#include "apnea/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "apnea/error.hpp"

namespace apnea::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size())
    throw Error(ErrorCode::ShapeMismatch, "nn", "shape " + shape_string(shape_) + " does not match " +
                                                    std::to_string(values_.size()) + " values");
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != values_.size())
    throw Error(ErrorCode::ShapeMismatch, "nn",
                "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void check_finite(std::span<const double> values, std::string_view where) {
  for (double v : values)
    if (!std::isfinite(v))
      throw Error(ErrorCode::NonFiniteActivation, "nn", std::string("non-finite value in ") + std::string(where));
}

void check_finite(const Tensor& t, std::string_view where) { check_finite(t.values(), where); }

void expect_shape(const Tensor& t, const Shape& expected, std::string_view where) {
  if (t.shape() != expected)
    throw Error(ErrorCode::ShapeMismatch, "nn",
                std::string(where) + ": expected " + shape_string(expected) + ", got " + shape_string(t.shape()));
}

}  // namespace apnea::nn
