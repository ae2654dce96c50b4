#include "protofuse/corpus/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "protofuse/corpus/text.hpp"
#include "protofuse/rng.hpp"

namespace protofuse::corpus {

std::optional<std::size_t> DomainManifest::find(std::string_view name) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].name == name) return i;
  }
  return std::nullopt;
}

void DomainManifest::validate() const {
  if (labels.size() < 2) {
    throw std::invalid_argument("domain '" + domain_id + "': at least 2 labels required, got " +
                                std::to_string(labels.size()));
  }
  std::set<std::string> seen;
  for (const auto& label : labels) {
    if (trim(label.name).empty()) {
      throw std::invalid_argument("domain '" + domain_id + "': blank label name");
    }
    if (!seen.insert(label.name).second) {
      throw std::invalid_argument("domain '" + domain_id + "': duplicate label '" + label.name + "'");
    }
  }
}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::full: return "full";
    case SplitTag::train: return "train";
    case SplitTag::holdout: return "holdout";
    case SplitTag::kshot: return "kshot";
    case SplitTag::validation: return "validation";
  }
  return "full";
}

SplitTag split_tag_from_string(std::string_view s) {
  for (auto tag : {SplitTag::full, SplitTag::train, SplitTag::holdout, SplitTag::kshot,
                   SplitTag::validation}) {
    if (to_string(tag) == s) return tag;
  }
  throw std::invalid_argument("unknown split tag '" + std::string(s) + "'");
}

Dataset::Dataset(DomainManifest manifest, std::vector<Example> examples, SplitTag tag)
    : manifest_(std::move(manifest)), examples_(std::move(examples)), tag_(tag) {
  manifest_.validate();
  for (const auto& ex : examples_) {
    if (ex.domain_id != manifest_.domain_id) {
      throw std::invalid_argument("example uid " + std::to_string(ex.uid) + " belongs to domain '" +
                                  ex.domain_id + "', not '" + manifest_.domain_id + "'");
    }
    if (ex.label_index >= manifest_.n_classes()) {
      throw std::invalid_argument("example uid " + std::to_string(ex.uid) +
                                  ": label index out of range");
    }
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (const auto& ex : examples_) ++counts[ex.label_index];
  return counts;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> out(n_classes());
  for (std::size_t i = 0; i < examples_.size(); ++i) out[examples_[i].label_index].push_back(i);
  return out;
}

std::vector<std::size_t> water_fill(const std::vector<std::size_t>& available, std::size_t target) {
  std::vector<std::size_t> alloc(available.size(), 0);
  std::vector<std::size_t> open;
  for (std::size_t c = 0; c < available.size(); ++c) {
    if (available[c] > 0) open.push_back(c);
  }
  std::size_t remaining = target;
  while (remaining > 0 && !open.empty()) {
    const std::size_t share = remaining / open.size();
    if (share == 0) {
      // Fewer units than open classes: one each, lowest index first.
      for (std::size_t i = 0; i < remaining; ++i) ++alloc[open[i]];
      break;
    }
    std::vector<std::size_t> still_open;
    for (auto c : open) {
      const std::size_t give = std::min(share, available[c] - alloc[c]);
      alloc[c] += give;
      remaining -= give;
      if (alloc[c] < available[c]) still_open.push_back(c);
    }
    open = std::move(still_open);
  }
  return alloc;
}

namespace {

// Picks `count` positions from `pool` uniformly without replacement and
// returns them sorted, so outputs keep dataset order.
std::vector<std::size_t> pick(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  rng.shuffle(pool);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<Example> gather(const Dataset& d, const std::vector<bool>& chosen, bool want) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (chosen[i] == want) out.push_back(d.examples()[i]);
  }
  return out;
}

}  // namespace

Dataset stratified_sample(const Dataset& d, std::size_t target_size, std::uint64_t seed) {
  if (target_size < d.n_classes()) {
    throw std::invalid_argument("stratified_sample: target " + std::to_string(target_size) +
                                " smaller than class count " + std::to_string(d.n_classes()));
  }
  if (target_size > d.size()) {
    throw std::invalid_argument("stratified_sample: target " + std::to_string(target_size) +
                                " exceeds dataset size " + std::to_string(d.size()));
  }
  const auto by_class = d.indices_by_class();
  const auto alloc = water_fill(d.class_counts(), target_size);
  Rng rng(seed);
  std::vector<bool> chosen(d.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    for (auto i : pick(by_class[c], alloc[c], rng)) chosen[i] = true;
  }
  return d.with(gather(d, chosen, true), d.split_tag());
}

Dataset collapse_binary(const Dataset& d, const std::set<std::string>& neutral_labels) {
  std::vector<bool> neutral(d.n_classes(), false);
  for (const auto& name : neutral_labels) {
    auto idx = d.manifest().find(name);
    if (!idx) {
      throw std::invalid_argument("collapse_binary: unknown neutral label '" + name +
                                  "' in domain '" + d.domain_id() + "'");
    }
    neutral[*idx] = true;
  }
  DomainManifest binary{d.domain_id(), {{"Offensive", ""}, {"Not Offensive", ""}},
                        d.manifest().source_meta};
  std::vector<Example> examples = d.examples();
  for (auto& ex : examples) ex.label_index = neutral[ex.label_index] ? 1 : 0;
  return Dataset(std::move(binary), std::move(examples), d.split_tag());
}

Split kshot_sample(const Dataset& d, std::size_t k, std::uint64_t seed) {
  const auto by_class = d.indices_by_class();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < k) {
      throw std::invalid_argument("kshot_sample: class '" + d.manifest().label(c).name + "' has " +
                                  std::to_string(by_class[c].size()) + " examples, need " +
                                  std::to_string(k));
    }
  }
  Rng rng(seed);
  std::vector<bool> chosen(d.size(), false);
  for (const auto& members : by_class) {
    for (auto i : pick(members, k, rng)) chosen[i] = true;
  }
  return {d.with(gather(d, chosen, true), SplitTag::kshot),
          d.with(gather(d, chosen, false), d.split_tag())};
}

Split holdout_split(const Dataset& d, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout_split: fraction must lie in (0, 1)");
  }
  const auto by_class = d.indices_by_class();
  Rng rng(seed);
  std::vector<bool> held(d.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const std::size_t n = by_class[c].size();
    if (n == 0) continue;
    const auto count = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
    if (count == 0 || count == n) {
      throw std::invalid_argument("holdout_split: fraction " + std::to_string(holdout_fraction) +
                                  " leaves an empty side for class '" +
                                  d.manifest().label(c).name + "' (" + std::to_string(n) +
                                  " examples)");
    }
    for (auto i : pick(by_class[c], count, rng)) held[i] = true;
  }
  return {d.with(gather(d, held, false), SplitTag::train),
          d.with(gather(d, held, true), SplitTag::holdout)};
}

}  // namespace protofuse::corpus
