#pragma once

#include <optional>
#include <string>
#include <vector>

#include "protofuse/corpus/dataset.hpp"
#include "protofuse/rng.hpp"

namespace protofuse::metalearn {

/// One N-way K-shot task drawn from a single domain. Class of an example is
/// its label_index; N is the domain's full label count.
struct Episode {
  corpus::DomainManifest manifest;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::vector<corpus::Example> support;
  std::vector<corpus::Example> query;

  const std::string& domain_id() const { return manifest.domain_id; }
};

/// Throws std::invalid_argument unless support and query are disjoint by
/// uid, each holds exactly k_shot examples of every class, and every
/// example belongs to the episode's domain.
void validate_episode(const Episode& ep);

/// Builds an episode from one domain: k support and k query per class.
Episode make_episode(const corpus::Dataset& domain, std::size_t k, Rng& rng);

/// Samples episodes across domains. K is drawn uniformly from the feasible
/// k_choices (a domain is eligible for K when every class has >= 2K
/// examples) unless fixed by the caller; the domain is then drawn uniformly
/// among the eligible ones.
class EpisodeSampler {
 public:
  EpisodeSampler(std::vector<const corpus::Dataset*> domains, std::vector<std::size_t> k_choices,
                 std::uint64_t seed);

  Episode next(std::optional<std::size_t> fixed_k = std::nullopt);
  /// Episode from a specific domain (used by MLDG's domain split).
  Episode next_from(std::size_t domain_index, std::optional<std::size_t> fixed_k = std::nullopt);

  bool eligible(std::size_t domain_index, std::size_t k) const;
  std::size_t calls() const { return calls_; }
  std::size_t domain_count() const { return domains_.size(); }
  const std::vector<std::size_t>& k_choices() const { return k_choices_; }
  Rng& rng() { return rng_; }

 private:
  std::vector<const corpus::Dataset*> domains_;
  std::vector<std::size_t> k_choices_;
  Rng rng_;
  std::size_t calls_ = 0;
};

}  // namespace protofuse::metalearn
