#pragma once

#include <span>

namespace dei2n {

/// Probability that a random positive scores above a random negative, ties
/// counting one half (rank-sum form). Throws UndefinedMetricError when
/// only one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// ((auc_model - 0.5) / (auc_base - 0.5) - 1) * 100. Throws
/// std::domain_error when auc_base == 0.5.
double rela_impr(double auc_model, double auc_base);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace dei2n
