#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "dei2n/graph.hpp"

namespace dei2n {

struct GradCheckResult {
  /// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over all entries.
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  /// Entries with a kink on both sides even at the smallest step.
  std::size_t kinked_entries = 0;
};

/// Builds a scalar loss on the given graph. Must be deterministic.
using LossFn = std::function<Tensor(Graph&)>;

/// Compares reverse-mode gradients of `loss` against a five-point
/// finite-difference stencil, perturbing every entry of every tensor in
/// `params`. Graphs are built with branch tracking; when a perturbed point
/// lies on a different side of a kink than the unperturbed one the step is
/// divided by 10, up to three times, after which a one-sided difference
/// on the smooth side is used.
GradCheckResult grad_check(const LossFn& loss, std::span<Tensor> params, double step = 1e-3);

}  // namespace dei2n
