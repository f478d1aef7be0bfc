#include "dei2n/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "dei2n/errors.hpp"

namespace dei2n {

std::size_t num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(num_elements(shape), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  if (num_elements(shape) != values.size())
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
  storage_->requires_grad = requires_grad;
}

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = num_elements(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

const Shape& Tensor::shape() const { return storage_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return storage_->shape[axis];
}

std::size_t Tensor::size() const { return storage_->values.size(); }

std::span<const double> Tensor::values() const { return storage_->values; }
std::span<double> Tensor::values() { return storage_->values; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return storage_->values[0];
}

bool Tensor::requires_grad() const { return storage_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { storage_->requires_grad = flag; }

std::span<double> Tensor::grad() const {
  if (storage_->grad.size() != storage_->values.size())
    storage_->grad.assign(storage_->values.size(), 0.0);
  return storage_->grad;
}

bool Tensor::has_grad() const { return !storage_->grad.empty(); }

void Tensor::zero_grad() { std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  Tensor out(shape(), storage_->values, requires_grad());
  return out;
}

}  // namespace dei2n
