#pragma once

#include <cstddef>
#include <span>

namespace protofuse::evaluate {

/// Unweighted mean over all n_classes of per-class F1. Precision or recall
/// with a zero denominator counts as 0. Throws std::invalid_argument on a
/// length mismatch or an index outside [0, n_classes).
double macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> golds,
                std::size_t n_classes);

struct MeanStd {
  double mean = 0;
  double std = 0;  // population: divides by n
};

MeanStd population_mean_std(std::span<const double> values);

}  // namespace protofuse::evaluate
