#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/autograd/optim.hpp"
#include "protofuse/fusion/fusion.hpp"
#include "protofuse/metalearn/proto.hpp"
#include "protofuse/rng.hpp"

namespace protofuse::metalearn {

enum class Algorithm { protonet, protomaml, mldg };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view s);

struct MetaConfig {
  std::size_t meta_epochs = 5;
  std::size_t tasks_per_epoch = 300;
  std::vector<std::size_t> k_choices{16, 32, 64, 128};
  double inner_lr = 1e-3;    // alpha
  double outer_lr = 1e-4;    // gamma
  double mldg_beta = 1.0;    // beta
  std::size_t inner_steps = 5;
  Distance distance = Distance::euclidean;
  /// Per-component rates (E, A, C); when absent every component uses outer_lr.
  std::optional<ag::ComponentRates> rates;
  std::uint64_t seed = 0;

  ag::ComponentRates effective_rates() const {
    return rates ? *rates : ag::ComponentRates{outer_lr, outer_lr, outer_lr};
  }

  /// Throws std::invalid_argument on non-positive rates, empty k_choices,
  /// or negative beta.
  void validate() const;

  bool operator==(const MetaConfig&) const = default;
};

/// Everything a training loop owns: the model (encoder, fusion, heads), the
/// optimizer moments, the dropout stream and the config that produced it.
struct LearnerState {
  fusion::Model model;
  ag::AdamW optimizer;
  Rng rng;
  MetaConfig config;
  std::string algorithm;  // empty when not meta-trained

  static LearnerState fresh(fusion::Model model, const MetaConfig& config);
};

}  // namespace protofuse::metalearn
