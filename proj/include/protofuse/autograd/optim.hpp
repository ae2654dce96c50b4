#pragma once

#include <functional>
#include <map>
#include <string>

#include "protofuse/autograd/tensor.hpp"

namespace protofuse::ag {

/// Learning rates per parameter component, keyed by the first name segment:
/// "encoder." (E), "joint." (A), "head." (C).
struct ComponentRates {
  double encoder = 1e-3;
  double attention = 1e-3;
  double head = 1e-3;

  double rate_for(const std::string& param_name) const;
  bool operator==(const ComponentRates&) const = default;
  ComponentRates scaled(double factor) const {
    return {encoder * factor, attention * factor, head * factor};
  }
};

using RateFn = std::function<double(const std::string&)>;

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Moments are keyed by parameter name and
/// grow with the parameter when rows are appended (new label tokens).
class AdamW {
 public:
  struct Slot {
    Matrix m;
    Matrix v;
    long step = 0;
  };

  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter that has a gradient.
  void step(ParamStore& params, const RateFn& lr_for);

  const AdamWConfig& config() const { return cfg_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  std::map<std::string, Slot>& slots() { return slots_; }
  void reset() { slots_.clear(); }

 private:
  AdamWConfig cfg_;
  std::map<std::string, Slot> slots_;
};

/// p -= lr * grad for every parameter with a gradient.
void sgd_step(ParamStore& params, const RateFn& lr_for);

/// Cosine annealing from `peak` at step 0 to `floor` at step `total`.
double cosine_annealing(double peak, double floor, std::size_t step, std::size_t total);

}  // namespace protofuse::ag
