#include "protofuse/metalearn/episode.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace protofuse::metalearn {

void validate_episode(const Episode& ep) {
  if (ep.n_way != ep.manifest.n_classes()) {
    throw std::invalid_argument("episode: n_way differs from the domain's label count");
  }
  std::set<std::uint64_t> support_ids;
  auto check_set = [&](const std::vector<corpus::Example>& set, const char* which) {
    std::vector<std::size_t> counts(ep.n_way, 0);
    for (const auto& ex : set) {
      if (ex.domain_id != ep.domain_id()) {
        throw std::invalid_argument(std::string("episode: ") + which + " example from domain '" +
                                    ex.domain_id + "'");
      }
      if (ex.label_index >= ep.n_way) throw std::invalid_argument("episode: class out of range");
      ++counts[ex.label_index];
    }
    for (std::size_t c = 0; c < ep.n_way; ++c) {
      if (counts[c] != ep.k_shot) {
        throw std::invalid_argument(std::string("episode: ") + which + " has " +
                                    std::to_string(counts[c]) + " examples of class " +
                                    std::to_string(c) + ", expected " + std::to_string(ep.k_shot));
      }
    }
  };
  check_set(ep.support, "support");
  check_set(ep.query, "query");
  for (const auto& ex : ep.support) support_ids.insert(ex.uid);
  if (support_ids.size() != ep.support.size()) {
    throw std::invalid_argument("episode: duplicate example inside support");
  }
  std::set<std::uint64_t> query_ids;
  for (const auto& ex : ep.query) {
    if (support_ids.count(ex.uid)) {
      throw std::invalid_argument("episode: example uid " + std::to_string(ex.uid) +
                                  " appears in both support and query");
    }
    if (!query_ids.insert(ex.uid).second) {
      throw std::invalid_argument("episode: duplicate example inside query");
    }
  }
}

Episode make_episode(const corpus::Dataset& domain, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("episode: k must be positive");
  Episode ep;
  ep.manifest = domain.manifest();
  ep.n_way = domain.n_classes();
  ep.k_shot = k;
  auto by_class = domain.indices_by_class();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.size() < 2 * k) {
      throw std::invalid_argument("episode: class '" + domain.manifest().label(c).name +
                                  "' of domain '" + domain.domain_id() + "' has " +
                                  std::to_string(members.size()) + " examples, need " +
                                  std::to_string(2 * k));
    }
    rng.shuffle(members);
    for (std::size_t i = 0; i < k; ++i) ep.support.push_back(domain.examples()[members[i]]);
    for (std::size_t i = k; i < 2 * k; ++i) ep.query.push_back(domain.examples()[members[i]]);
  }
  return ep;
}

EpisodeSampler::EpisodeSampler(std::vector<const corpus::Dataset*> domains,
                               std::vector<std::size_t> k_choices, std::uint64_t seed)
    : domains_(std::move(domains)), k_choices_(std::move(k_choices)), rng_(seed) {
  if (domains_.empty()) throw std::invalid_argument("episode sampler: no domains");
  if (k_choices_.empty()) throw std::invalid_argument("episode sampler: empty k_choices");
}

bool EpisodeSampler::eligible(std::size_t d, std::size_t k) const {
  const auto counts = domains_.at(d)->class_counts();
  return std::all_of(counts.begin(), counts.end(), [k](std::size_t n) { return n >= 2 * k; });
}

Episode EpisodeSampler::next(std::optional<std::size_t> fixed_k) {
  std::vector<std::size_t> ks;
  if (fixed_k) {
    ks.push_back(*fixed_k);
  } else {
    for (auto k : k_choices_) {
      for (std::size_t d = 0; d < domains_.size(); ++d) {
        if (eligible(d, k)) {
          ks.push_back(k);
          break;
        }
      }
    }
  }
  if (ks.empty()) throw std::invalid_argument("episode sampler: no domain can furnish 2K examples per class for any K");
  const std::size_t k = ks[rng_.index(ks.size())];
  std::vector<std::size_t> pool;
  for (std::size_t d = 0; d < domains_.size(); ++d) {
    if (eligible(d, k)) pool.push_back(d);
  }
  if (pool.empty()) {
    throw std::invalid_argument("episode sampler: no domain has " + std::to_string(2 * k) +
                                " examples in every class");
  }
  const std::size_t d = pool[rng_.index(pool.size())];
  ++calls_;
  return make_episode(*domains_[d], k, rng_);
}

Episode EpisodeSampler::next_from(std::size_t domain_index, std::optional<std::size_t> fixed_k) {
  std::vector<std::size_t> ks;
  if (fixed_k) {
    ks.push_back(*fixed_k);
  } else {
    for (auto k : k_choices_) {
      if (eligible(domain_index, k)) ks.push_back(k);
    }
  }
  if (ks.empty()) {
    throw std::invalid_argument("episode sampler: domain '" + domains_.at(domain_index)->domain_id() +
                                "' cannot furnish 2K examples per class");
  }
  const std::size_t k = ks[rng_.index(ks.size())];
  ++calls_;
  return make_episode(*domains_.at(domain_index), k, rng_);
}

}  // namespace protofuse::metalearn
