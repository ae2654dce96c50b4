#include "protofuse/metalearn/learner.hpp"

#include <stdexcept>

namespace protofuse::metalearn {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::protonet: return "protonet";
    case Algorithm::protomaml: return "protomaml";
    case Algorithm::mldg: return "mldg";
  }
  return "protonet";
}

Algorithm algorithm_from_string(std::string_view s) {
  for (auto a : {Algorithm::protonet, Algorithm::protomaml, Algorithm::mldg}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown algorithm '" + std::string(s) +
                              "' (expected protonet|protomaml|mldg)");
}

void MetaConfig::validate() const {
  if (k_choices.empty()) throw std::invalid_argument("meta: k_choices must not be empty");
  for (auto k : k_choices) {
    if (k == 0) throw std::invalid_argument("meta: k_choices entries must be positive");
  }
  const auto r = effective_rates();
  if (!(inner_lr > 0 && outer_lr > 0 && r.encoder > 0 && r.attention > 0 && r.head > 0)) {
    throw std::invalid_argument("meta: learning rates must be positive");
  }
  if (mldg_beta < 0) throw std::invalid_argument("meta: mldg beta must be >= 0");
}

LearnerState LearnerState::fresh(fusion::Model model, const MetaConfig& config) {
  config.validate();
  return LearnerState{std::move(model), ag::AdamW{}, Rng(Rng::mix(config.seed ^ 0x5eed)), config, {}};
}

}  // namespace protofuse::metalearn
