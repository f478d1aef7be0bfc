#include "dei2n/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dei2n/errors.hpp"
#include "dei2n/kernels.hpp"

namespace dei2n {
namespace {

using kernels::Trans;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

}  // namespace

Mask::Mask(Shape s, std::vector<std::uint8_t> b) : shape(std::move(s)), bits(std::move(b)) {
  if (num_elements(shape) != bits.size())
    throw ShapeError("mask shape " + to_string(shape) + " does not match " +
                     std::to_string(bits.size()) + " entries");
}

Mask Mask::all(Shape s) {
  const std::size_t n = num_elements(s);
  return Mask(std::move(s), std::vector<std::uint8_t>(n, 1));
}

Graph::Graph(GraphOptions options) : options_(options), rng_(options.seed) {}

Tensor Graph::make_output(Shape shape, bool needs_grad) {
  Tensor out(std::move(shape), needs_grad);
  if (needs_grad) outputs_.push_back(out);
  return out;
}

bool Graph::wants_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!options_.record) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void Graph::record(std::function<void()> fn) { backward_fns_.push_back(std::move(fn)); }

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  const std::size_t k = b.dim(0), n = b.dim(1), rows = a.size() / k;
  Shape shape = a.shape();
  shape.back() = n;
  const bool g = wants_grad({&a, &b});
  Tensor out = make_output(std::move(shape), g);
  kernels::gemm(Trans::no, Trans::no, rows, n, k, a.values(), b.values(), out.values());
  if (g)
    record([a, b, out, rows, n, k]() mutable {
      if (a.requires_grad())
        kernels::gemm(Trans::no, Trans::yes, rows, k, n, out.grad(), b.values(), a.grad());
      if (b.requires_grad())
        kernels::gemm(Trans::yes, Trans::no, k, n, rows, a.values(), out.grad(), b.grad());
    });
  return out;
}

Tensor Graph::bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1)))
    throw ShapeError("bmm: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + (transpose_b ? " (transposed)" : ""));
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const Trans tb = transpose_b ? Trans::yes : Trans::no;
  const bool g = wants_grad({&a, &b});
  Tensor out = make_output({batch, m, n}, g);
  kernels::batched_gemm(batch, Trans::no, tb, m, n, k, a.values(), b.values(), out.values());
  if (g)
    record([a, b, out, batch, m, n, k, transpose_b]() mutable {
      if (transpose_b) {
        if (a.requires_grad())
          kernels::batched_gemm(batch, Trans::no, Trans::no, m, k, n, out.grad(), b.values(),
                                a.grad());
        if (b.requires_grad())
          kernels::batched_gemm(batch, Trans::yes, Trans::no, n, k, m, out.grad(), a.values(),
                                b.grad());
      } else {
        if (a.requires_grad())
          kernels::batched_gemm(batch, Trans::no, Trans::yes, m, k, n, out.grad(), b.values(),
                                a.grad());
        if (b.requires_grad())
          kernels::batched_gemm(batch, Trans::yes, Trans::no, k, n, m, a.values(), out.grad(),
                                b.grad());
      }
    });
  return out;
}

Tensor Graph::linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_bias(matmul(x, weight), bias);
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const bool g = wants_grad({&a, &b});
  Tensor out = make_output(a.shape(), g);
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  if (g)
    record([a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const bool g = wants_grad({&a, &b});
  Tensor out = make_output(a.shape(), g);
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  if (g)
    record([a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  return out;
}

Tensor Graph::hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  const bool g = wants_grad({&a, &b});
  Tensor out = make_output(a.shape(), g);
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  if (g)
    record([a, b, out]() mutable {
      auto go = out.grad();
      auto av = a.values(), bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
      }
    });
  return out;
}

Tensor Graph::add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.size() != x.shape().back())
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " +
                     to_string(x.shape()));
  const std::size_t n = bias.size(), rows = x.size() / n;
  const bool g = wants_grad({&x, &bias});
  Tensor out = make_output(x.shape(), g);
  auto o = out.values();
  auto xv = x.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = xv[r * n + j] + bv[j];
  if (g)
    record([x, bias, out, rows, n]() mutable {
      auto go = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gb[j] += go[r * n + j];
      }
    });
  return out;
}

Tensor Graph::scale(const Tensor& x, double factor) {
  const bool g = wants_grad({&x});
  Tensor out = make_output(x.shape(), g);
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor;
  if (g)
    record([x, out, factor]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * factor;
    });
  return out;
}

Tensor Graph::mul_rows(const Tensor& x, const Tensor& s) {
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  if (s.size() != rows)
    throw ShapeError("mul_rows: scale " + to_string(s.shape()) + " does not match rows of " +
                     to_string(x.shape()));
  const bool g = wants_grad({&x, &s});
  Tensor out = make_output(x.shape(), g);
  auto o = out.values();
  auto xv = x.values(), sv = s.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) o[r * d + j] = xv[r * d + j] * sv[r];
  if (g)
    record([x, s, out, rows, d]() mutable {
      auto go = out.grad();
      auto xv = x.values(), sv = s.values();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += go[r * d + j] * sv[r];
      }
      if (s.requires_grad()) {
        auto gs = s.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          double acc = 0;
          for (std::size_t j = 0; j < d; ++j) acc += go[r * d + j] * xv[r * d + j];
          gs[r] += acc;
        }
      }
    });
  return out;
}

Tensor Graph::sigmoid(const Tensor& x) {
  const bool g = wants_grad({&x});
  Tensor out = make_output(x.shape(), g);
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    // Branch on sign so exp never overflows.
    const double v = xv[i];
    if (v >= 0) {
      o[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      o[i] = e / (1.0 + e);
    }
  }
  if (g)
    record([x, out]() mutable {
      auto go = out.grad();
      auto ov = out.values();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * ov[i] * (1.0 - ov[i]);
    });
  return out;
}

Tensor Graph::prelu(const Tensor& x, const Tensor& slope) {
  if (slope.rank() != 1 || slope.size() != x.shape().back())
    throw ShapeError("prelu: slope " + to_string(slope.shape()) + " does not match " +
                     to_string(x.shape()));
  const std::size_t d = slope.size(), rows = x.size() / d;
  const bool g = wants_grad({&x, &slope});
  Tensor out = make_output(x.shape(), g);
  auto o = out.values();
  auto xv = x.values(), av = slope.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double v = xv[r * d + j];
      o[r * d + j] = v > 0 ? v : av[j] * v;
    }
  if (options_.track_branches)
    for (double v : xv) branches_.push_back(v > 0);
  if (g)
    record([x, slope, out, rows, d]() mutable {
      auto go = out.grad();
      auto xv = x.values(), av = slope.values();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            gx[i] += xv[i] > 0 ? go[i] : go[i] * av[j];
          }
      }
      if (slope.requires_grad()) {
        auto ga = slope.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            if (xv[i] <= 0) ga[j] += go[i] * xv[i];
          }
      }
    });
  return out;
}

Tensor Graph::concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor Graph::concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     to_string(first));
  Shape shape = first;
  shape[axis] = 0;
  bool g = false;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok)
      throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " +
                       to_string(s) + " on axis " + std::to_string(axis));
    shape[axis] += s[axis];
    g = g || wants_grad({&p});
  }
  const std::size_t outer = prod(first, 0, axis);
  const std::size_t out_chunk = prod(shape, axis, shape.size());
  Tensor out = make_output(std::move(shape), g);
  auto o = out.values();
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    const std::size_t chunk = p.size() / outer;
    auto pv = p.values();
    for (std::size_t r = 0; r < outer; ++r)
      std::copy_n(pv.begin() + r * chunk, chunk, o.begin() + r * out_chunk + offset);
    offsets.push_back(offset);
    offset += chunk;
  }
  if (g)
    record([inputs = std::vector<Tensor>(parts.begin(), parts.end()), out, offsets, outer,
            out_chunk]() mutable {
      auto go = out.grad();
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& p = inputs[k];
        if (!p.requires_grad()) continue;
        const std::size_t chunk = p.size() / outer;
        auto gp = p.grad();
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t j = 0; j < chunk; ++j)
            gp[r * chunk + j] += go[r * out_chunk + offsets[k] + j];
      }
    });
  return out;
}

Tensor Graph::slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || begin + length > s[axis])
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + length) + ") on axis " + std::to_string(axis) +
                     " out of bounds for " + to_string(s));
  Shape shape = s;
  shape[axis] = length;
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis + 1, s.size());
  const std::size_t in_chunk = s[axis] * inner, out_chunk = length * inner;
  const bool g = wants_grad({&x});
  Tensor out = make_output(std::move(shape), g);
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t r = 0; r < outer; ++r)
    std::copy_n(xv.begin() + r * in_chunk + begin * inner, out_chunk, o.begin() + r * out_chunk);
  if (g)
    record([x, out, outer, inner, in_chunk, out_chunk, begin]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t j = 0; j < out_chunk; ++j)
          gx[r * in_chunk + begin * inner + j] += go[r * out_chunk + j];
    });
  return out;
}

Tensor Graph::reshape(const Tensor& x, Shape shape) {
  if (num_elements(shape) != x.size())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  const bool g = wants_grad({&x});
  Tensor out = make_output(std::move(shape), g);
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  if (g)
    record([x, out]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  return out;
}

Tensor Graph::expand(const Tensor& x, std::size_t axis, std::size_t count) {
  const Shape& s = x.shape();
  if (axis > s.size() || count == 0)
    throw ShapeError("expand: axis " + std::to_string(axis) + " invalid for " + to_string(s));
  Shape shape = s;
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  const std::size_t outer = prod(s, 0, axis), inner = prod(s, axis, s.size());
  const bool g = wants_grad({&x});
  Tensor out = make_output(std::move(shape), g);
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t r = 0; r < outer; ++r)
    for (std::size_t c = 0; c < count; ++c)
      std::copy_n(xv.begin() + r * inner, inner, o.begin() + (r * count + c) * inner);
  if (g)
    record([x, out, outer, inner, count]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t c = 0; c < count; ++c)
          for (std::size_t j = 0; j < inner; ++j)
            gx[r * inner + j] += go[(r * count + c) * inner + j];
    });
  return out;
}

Tensor Graph::sum(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size())
    throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for " + to_string(s));
  Shape shape = s;
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  const bool g = wants_grad({&x});
  Tensor out = make_output(std::move(shape), g);
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t r = 0; r < outer; ++r)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t j = 0; j < inner; ++j) o[r * inner + j] += xv[(r * len + l) * inner + j];
  if (g)
    record([x, out, outer, len, inner]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t j = 0; j < inner; ++j) gx[(r * len + l) * inner + j] += go[r * inner + j];
    });
  return out;
}

Tensor Graph::sum_all(const Tensor& x) {
  const bool g = wants_grad({&x});
  Tensor out = make_output({1}, g);
  double acc = 0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc;
  if (g)
    record([x, out]() mutable {
      const double go = out.grad()[0];
      for (double& v : x.grad()) v += go;
    });
  return out;
}

Tensor Graph::masked_softmax(const Tensor& logits, const Mask& mask) {
  if (mask.shape != logits.shape())
    throw ShapeError("masked_softmax: mask " + to_string(mask.shape) + " does not match logits " +
                     to_string(logits.shape()));
  const std::size_t n = logits.shape().back(), rows = logits.size() / n;
  const bool g = wants_grad({&logits});
  Tensor out = make_output(logits.shape(), g);
  auto o = out.values();
  auto lv = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[base + j]) mx = std::max(mx, lv[base + j]);
    if (mx == -INFINITY) throw std::invalid_argument("empty attention row");
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = mask[base + j] ? std::exp(lv[base + j] - mx) : 0.0;
      o[base + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) o[base + j] /= total;
  }
  if (g)
    record([logits, out, rows, n]() mutable {
      auto go = out.grad();
      auto ov = out.values();
      auto gl = logits.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * n;
        double dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += go[base + j] * ov[base + j];
        for (std::size_t j = 0; j < n; ++j) gl[base + j] += ov[base + j] * (go[base + j] - dot);
      }
    });
  return out;
}

Tensor Graph::softmax(const Tensor& logits) {
  return masked_softmax(logits, Mask::all(logits.shape()));
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.size() != d || bias.size() != d)
    throw ShapeError("layer_norm: gain " + to_string(gain.shape()) + " / bias " +
                     to_string(bias.shape()) + " do not match " + to_string(x.shape()));
  const std::size_t rows = x.size() / d;
  const bool g = wants_grad({&x, &gain, &bias});
  Tensor out = make_output(x.shape(), g);
  std::vector<double> normed(x.size());
  std::vector<double> inv_std(rows);
  auto o = out.values();
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xv[base + j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xv[base + j] - mean) * (xv[base + j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      normed[base + j] = (xv[base + j] - mean) * inv_std[r];
      o[base + j] = normed[base + j] * gv[j] + bv[j];
    }
  }
  if (g)
    record([x, gain, bias, out, normed = std::move(normed), inv_std = std::move(inv_std), rows,
            d]() mutable {
      auto go = out.grad();
      auto gv = gain.values();
      if (gain.requires_grad()) {
        auto gg = gain.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * normed[r * d + j];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
      }
      if (x.requires_grad()) {
        auto gx = x.grad();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * d;
          double mean_g = 0, mean_gn = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gn = go[base + j] * gv[j];
            mean_g += gn;
            mean_gn += gn * normed[base + j];
          }
          mean_g *= inv_d;
          mean_gn *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double gn = go[base + j] * gv[j];
            gx[base + j] += inv_std[r] * (gn - mean_g - normed[base + j] * mean_gn);
          }
        }
      }
    });
  return out;
}

Tensor Graph::dropout(const Tensor& x, double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!options_.training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  std::vector<double> factor(x.size());
  for (double& f : factor) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    f = u < keep ? scale : 0.0;
  }
  const bool g = wants_grad({&x});
  Tensor out = make_output(x.shape(), g);
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor[i];
  if (g)
    record([x, out, factor = std::move(factor)]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * factor[i];
    });
  return out;
}

Tensor Graph::gather(const Tensor& table, std::span<const std::size_t> indices, Shape lead_shape) {
  if (table.rank() != 2) throw ShapeError("gather: table must be 2-D, got " + to_string(table.shape()));
  if (num_elements(lead_shape) != indices.size())
    throw ShapeError("gather: " + std::to_string(indices.size()) + " indices for shape " +
                     to_string(lead_shape));
  const std::size_t rows = table.dim(0), d = table.dim(1);
  for (std::size_t idx : indices)
    if (idx >= rows)
      throw ShapeError("gather: index " + std::to_string(idx) + " out of range for table " +
                       to_string(table.shape()));
  Shape shape = std::move(lead_shape);
  shape.push_back(d);
  const bool g = wants_grad({&table});
  Tensor out = make_output(std::move(shape), g);
  auto o = out.values();
  auto tv = table.values();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(tv.begin() + indices[i] * d, d, o.begin() + i * d);
  if (g)
    record([table, out, idx = std::vector<std::size_t>(indices.begin(), indices.end()),
            d]() mutable {
      auto go = out.grad();
      auto gt = table.grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += go[i * d + j];
    });
  return out;
}

Tensor Graph::bce_loss(const Tensor& preds, std::span<const double> labels) {
  if (preds.size() != labels.size())
    throw ShapeError("bce_loss: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  const std::size_t n = preds.size();
  const bool g = wants_grad({&preds});
  Tensor out = make_output({1}, g);
  auto pv = preds.values();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::clamp(pv[i], lo, hi);
    acc += labels[i] * std::log(f) + (1.0 - labels[i]) * std::log(1.0 - f);
    if (options_.track_branches) branches_.push_back(pv[i] < lo ? 0 : pv[i] > hi ? 2 : 1);
  }
  out.values()[0] = -acc / static_cast<double>(n);
  if (g)
    record([preds, out, y = std::vector<double>(labels.begin(), labels.end()), n]() mutable {
      const double go = out.grad()[0];
      auto pv = preds.values();
      auto gp = preds.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double f = pv[i];
        if (f < lo || f > hi) continue;
        gp[i] += -go * (y[i] / f - (1.0 - y[i]) / (1.0 - f)) / static_cast<double>(n);
      }
    });
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  for (Tensor& t : outputs_) t.zero_grad();
  if (!loss.requires_grad()) return;
  Tensor l = loss;
  l.grad()[0] = 1.0;
  for (auto it = backward_fns_.rbegin(); it != backward_fns_.rend(); ++it) (*it)();
}

void Graph::reset() {
  outputs_.clear();
  backward_fns_.clear();
  branches_.clear();
}

}  // namespace dei2n
