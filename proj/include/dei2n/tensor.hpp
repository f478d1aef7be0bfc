#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dei2n {

using Shape = std::vector<std::size_t>;

std::size_t num_elements(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage, the same way graph nodes and
/// parameters refer to one buffer. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, double value);
  static Tensor vector(std::initializer_list<double> values);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> values();
  double operator[](std::size_t i) const { return values()[i]; }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  /// Gradient buffer; allocated as zeros on first access. Writable through
  /// const handles, like the storage it belongs to.
  std::span<double> grad() const;
  bool has_grad() const;
  void zero_grad();

  Tensor clone() const;
  /// True if both handles refer to the same storage.
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    mutable std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

}  // namespace dei2n
