#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace protofuse::encoder {

using TokenId = Eigen::Index;

/// Dense token ids. The five specials come first, then corpus tokens by
/// descending frequency (ties lexicographic), then label tokens appended at
/// runtime. The base portion never changes after build.
class Vocab {
 public:
  static constexpr TokenId kCls = 0;
  static constexpr TokenId kSep = 1;
  static constexpr TokenId kPad = 2;
  static constexpr TokenId kMask = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr std::size_t kSpecialCount = 5;

  Vocab();

  /// `max_size` bounds the number of corpus tokens (specials not counted).
  static Vocab build(const std::vector<std::string>& corpus, std::size_t max_size);

  TokenId id(std::string_view token) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  std::size_t base_size() const { return base_size_; }
  bool is_special(TokenId id) const { return id >= 0 && id < static_cast<TokenId>(kSpecialCount); }

  /// Registers a label token for `label`, or returns the existing one. The
  /// caller is responsible for growing the embedding table to match.
  std::pair<TokenId, bool> add_label(const std::string& label);
  std::optional<TokenId> label_token(const std::string& label) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line, specials first.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);
  static Vocab from_tokens(std::vector<std::string> tokens);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

  static std::string label_key(const std::string& label) { return "[LABEL:" + label + "]"; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t base_size_ = kSpecialCount;
};

/// A fixed-length id sequence whose first `length` positions are valid.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t length = 0;

  bool operator==(const TokenSequence&) const = default;
};

/// [CLS] body [SEP], head-truncated to max_len with the trailing [SEP] kept,
/// padded with [PAD]. Unknown tokens map to [UNK].
TokenSequence tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len);

/// Frames already-mapped segments as [CLS] s0 [SEP] s1 [SEP] ... and pads.
/// Over-long sequences keep their head and end in [SEP].
TokenSequence frame_segments(const std::vector<std::vector<TokenId>>& segments,
                             std::size_t max_len);

std::vector<TokenId> map_tokens(std::string_view text, const Vocab& vocab);

}  // namespace protofuse::encoder
