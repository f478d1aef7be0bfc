#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dei2n/tensor.hpp"

namespace dei2n {

/// Boolean mask with an explicit shape; nonzero bytes mean "valid".
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(Shape s, std::vector<std::uint8_t> b);
  static Mask all(Shape s);
  std::size_t size() const { return bits.size(); }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
};

struct GraphOptions {
  /// Record backward closures. Off for evaluation-only passes.
  bool record = true;
  /// Enables dropout.
  bool training = false;
  /// Seeds the dropout stream of this graph.
  std::uint64_t seed = 0;
  /// Record which side of every non-smooth point (rectifier kink, loss
  /// clamp) each element fell on; see branches().
  bool track_branches = false;
};

/// Define-by-run tape.
///
/// Each operation computes its output eagerly and, when any input requires
/// a gradient and recording is on, appends a backward closure. backward()
/// replays the closures in reverse append order, so every node is visited
/// once and after all of its consumers. Leaf tensors (parameters)
/// accumulate gradients across backward calls; intermediates are reset at
/// the start of each backward.
class Graph {
 public:
  explicit Graph(GraphOptions options = {});

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return options_.training; }

  // Linear algebra.
  /// a[... x k] * b[k x n] -> [... x n]; leading axes of `a` are flattened into rows.
  Tensor matmul(const Tensor& a, const Tensor& b);
  /// Per-item product of a[B x m x k] with b[B x k x n], or with b[B x n x k]^T.
  Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
  /// matmul followed by a broadcast bias over the last axis.
  Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

  // Element-wise.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor hadamard(const Tensor& a, const Tensor& b);
  Tensor add_bias(const Tensor& x, const Tensor& bias);
  Tensor scale(const Tensor& x, double factor);
  /// x[... x d] * s[...] with s broadcast along the last axis of x.
  Tensor mul_rows(const Tensor& x, const Tensor& s);
  Tensor sigmoid(const Tensor& x);
  /// Rectifier with a learned negative slope per channel of the last axis.
  Tensor prelu(const Tensor& x, const Tensor& slope);

  // Shape manipulation.
  Tensor concat(std::span<const Tensor> parts, std::size_t axis);
  Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
  Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t length);
  Tensor reshape(const Tensor& x, Shape shape);
  /// Inserts a new axis at `axis` and repeats x `count` times along it.
  Tensor expand(const Tensor& x, std::size_t axis, std::size_t count);

  // Reductions.
  /// Sum-pooling over `axis`, which is removed from the result.
  Tensor sum(const Tensor& x, std::size_t axis);
  Tensor sum_all(const Tensor& x);

  // Normalisation and regularisation.
  /// Softmax over the last axis restricted to valid positions. Masked
  /// entries are exactly zero. Throws std::invalid_argument("empty
  /// attention row") if a row has no valid position.
  Tensor masked_softmax(const Tensor& logits, const Mask& mask);
  Tensor softmax(const Tensor& logits);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-8);
  /// Inverted dropout; the identity outside training or at rate 0.
  Tensor dropout(const Tensor& x, double rate);

  // Embeddings and loss.
  /// Rows of table[V x d] at `indices`, shaped lead_shape + [d]. The
  /// gradient is scattered back only into gathered rows.
  Tensor gather(const Tensor& table, std::span<const std::size_t> indices, Shape lead_shape);
  /// Mean binary cross-entropy of predictions in (0,1), clamped to
  /// [1e-12, 1 - 1e-12].
  Tensor bce_loss(const Tensor& preds, std::span<const double> labels);

  /// Reverse pass from a one-element tensor.
  void backward(const Tensor& loss);
  /// Drops all recorded nodes.
  void reset();
  std::size_t size() const { return backward_fns_.size(); }
  /// Branch decisions taken so far, in evaluation order. Two evaluations of
  /// the same function lie on one smooth piece iff these agree. Empty
  /// unless track_branches is set.
  const std::vector<std::uint8_t>& branches() const { return branches_; }

 private:
  Tensor make_output(Shape shape, bool needs_grad);
  bool wants_grad(std::initializer_list<const Tensor*> inputs) const;
  void record(std::function<void()> fn);

  GraphOptions options_;
  std::mt19937_64 rng_;
  std::vector<Tensor> outputs_;
  std::vector<std::function<void()>> backward_fns_;
  std::vector<std::uint8_t> branches_;
};

}  // namespace dei2n
