#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace protofuse::corpus {

struct LabelDef {
  std::string name;
  std::string definition;

  bool operator==(const LabelDef&) const = default;
};

/// A domain's label space. Label order defines the integer class indices.
struct DomainManifest {
  std::string domain_id;
  std::vector<LabelDef> labels;
  std::vector<std::string> source_meta;

  std::size_t n_classes() const { return labels.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  const LabelDef& label(std::size_t index) const { return labels.at(index); }

  /// Throws std::invalid_argument on fewer than two labels, blank names,
  /// or duplicate names.
  void validate() const;

  bool operator==(const DomainManifest&) const = default;
};

struct Example {
  std::string text;
  std::size_t label_index = 0;
  std::string domain_id;
  /// Stable identity within the source file (record ordinal). Splits and
  /// episodes compare examples by uid.
  std::uint64_t uid = 0;
  std::optional<std::string> id;

  bool operator==(const Example&) const = default;
};

enum class SplitTag { full, train, holdout, kshot, validation };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(std::string_view s);

class Dataset {
 public:
  Dataset() = default;
  /// Validates the manifest and that every example belongs to it.
  Dataset(DomainManifest manifest, std::vector<Example> examples, SplitTag tag = SplitTag::full);

  const DomainManifest& manifest() const { return manifest_; }
  const std::vector<Example>& examples() const { return examples_; }
  SplitTag split_tag() const { return tag_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const std::string& domain_id() const { return manifest_.domain_id; }
  std::size_t n_classes() const { return manifest_.n_classes(); }

  std::vector<std::size_t> class_counts() const;
  /// Example positions grouped by class, in dataset order.
  std::vector<std::vector<std::size_t>> indices_by_class() const;

  Dataset with(std::vector<Example> examples, SplitTag tag) const {
    return Dataset(manifest_, std::move(examples), tag);
  }

 private:
  DomainManifest manifest_;
  std::vector<Example> examples_;
  SplitTag tag_ = SplitTag::full;
};

/// Per-class allocation for a balanced sample of `target` items given
/// per-class availability. Classes that cannot fill their equal share give
/// everything they have and the deficit is spread over the rest; leftover
/// units go to the lowest class indices.
std::vector<std::size_t> water_fill(const std::vector<std::size_t>& available, std::size_t target);

Dataset stratified_sample(const Dataset& d, std::size_t target_size, std::uint64_t seed);

/// Maps every label to Offensive (index 0) except those in `neutral_labels`,
/// which map to Not Offensive (index 1).
Dataset collapse_binary(const Dataset& d, const std::set<std::string>& neutral_labels);

struct Split {
  Dataset first;
  Dataset second;
};

/// Returns {kshot, remainder}: exactly k per class, sampled without
/// replacement.
Split kshot_sample(const Dataset& d, std::size_t k, std::uint64_t seed);

/// Returns {train, holdout}, stratified with round(fraction * n_c) held out
/// per class.
Split holdout_split(const Dataset& d, double holdout_fraction, std::uint64_t seed);

}  // namespace protofuse::corpus
