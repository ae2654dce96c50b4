#include "protofuse/evaluate/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace protofuse::evaluate {

double macro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> golds,
                std::size_t n_classes) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("macro_f1: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(golds.size()) + " golds");
  }
  if (n_classes == 0) throw std::invalid_argument("macro_f1: no classes");
  std::vector<std::size_t> tp(n_classes, 0), predicted(n_classes, 0), actual(n_classes, 0);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i] >= n_classes || golds[i] >= n_classes) {
      throw std::invalid_argument("macro_f1: class index out of range");
    }
    ++predicted[predictions[i]];
    ++actual[golds[i]];
    if (predictions[i] == golds[i]) ++tp[golds[i]];
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double p = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    const double r = actual[c] ? static_cast<double>(tp[c]) / static_cast<double>(actual[c]) : 0.0;
    total += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return total / static_cast<double>(n_classes);
}

MeanStd population_mean_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean/std of an empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

}  // namespace protofuse::evaluate
