#include "dei2n/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace dei2n {
namespace {

struct Evaluation {
  double value;
  std::vector<std::uint8_t> branches;
};

Evaluation evaluate(const LossFn& loss) {
  Graph g({.record = false, .track_branches = true});
  const double value = loss(g).item();
  return {value, g.branches()};
}

// Smallest step tried when a perturbation crosses a kink, relative to the
// requested one.
constexpr int kMaxRefinements = 3;

}  // namespace

GradCheckResult grad_check(const LossFn& loss, std::span<Tensor> params, double step) {
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  std::vector<std::uint8_t> base_branches;
  {
    Graph g({.track_branches = true});
    Tensor l = loss(g);
    base_branches = g.branches();
    g.backward(l);
    for (Tensor& p : params) {
      auto gr = p.grad();
      analytic.emplace_back(gr.begin(), gr.end());
    }
  }

  const double base_value = evaluate(loss).value;

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      auto at = [&](double offset) {
        values[i] = original + offset;
        Evaluation e = evaluate(loss);
        values[i] = original;
        return e;
      };

      // Five-point stencil on the smooth piece containing the current
      // point; shrink the step while any sample lands across a kink, then
      // fall back to a one-sided difference on whichever side is smooth.
      double numeric = 0.0;
      double h = step;
      for (int attempt = 0;; ++attempt, h /= 10.0) {
        const Evaluation p1 = at(h), m1 = at(-h), p2 = at(2 * h), m2 = at(-2 * h);
        const bool plus = p1.branches == base_branches && p2.branches == base_branches;
        const bool minus = m1.branches == base_branches && m2.branches == base_branches;
        if (plus && minus) {
          numeric = (8.0 * (p1.value - m1.value) - (p2.value - m2.value)) / (12.0 * h);
          break;
        }
        if (attempt < kMaxRefinements) continue;
        if (plus)
          numeric = (-3.0 * base_value + 4.0 * p1.value - p2.value) / (2.0 * h);
        else if (minus)
          numeric = (3.0 * base_value - 4.0 * m1.value + m2.value) / (2.0 * h);
        else {
          numeric = (8.0 * (p1.value - m1.value) - (p2.value - m2.value)) / (12.0 * h);
          ++result.kinked_entries;
        }
        break;
      }

      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = k;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace dei2n
