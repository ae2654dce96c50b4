#include "protofuse/encoder/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "protofuse/corpus/text.hpp"

namespace protofuse::encoder {

namespace {
const std::vector<std::string> kSpecials = {"[CLS]", "[SEP]", "[PAD]", "[MASK]", "[UNK]"};

bool is_label_token(const std::string& t) {
  return t.size() > 8 && t.rfind("[LABEL:", 0) == 0 && t.back() == ']';
}
}  // namespace

Vocab::Vocab() : tokens_(kSpecials) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<TokenId>(i);
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t max_size) {
  std::map<std::string, std::size_t> freq;
  for (const auto& line : corpus) {
    for (auto& tok : corpus::split_ws(line)) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, count] : ranked) {
    if (v.tokens_.size() - kSpecialCount >= max_size) break;
    if (v.index_.count(tok)) continue;
    v.index_[tok] = static_cast<TokenId>(v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  v.base_size_ = v.tokens_.size();
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::pair<TokenId, bool> Vocab::add_label(const std::string& label) {
  const auto key = label_key(label);
  if (auto existing = find(key)) return {*existing, false};
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(key);
  index_[key] = id;
  return {id, true};
}

std::optional<TokenId> Vocab::label_token(const std::string& label) const {
  return find(label_key(label));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kSpecialCount ||
      !std::equal(kSpecials.begin(), kSpecials.end(), tokens.begin())) {
    throw std::invalid_argument("vocab: specials missing or out of order");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  v.base_size_ = v.tokens_.size();
  bool in_labels = false;
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("vocab: duplicate token '" + v.tokens_[i] + "'");
    }
    if (is_label_token(v.tokens_[i]) && !in_labels) {
      in_labels = true;
      v.base_size_ = i;
    }
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

std::vector<TokenId> map_tokens(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  for (const auto& tok : corpus::split_ws(text)) ids.push_back(vocab.id(tok));
  return ids;
}

TokenSequence frame_segments(const std::vector<std::vector<TokenId>>& segments,
                             std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("max_len must be at least 2");
  std::vector<TokenId> ids{Vocab::kCls};
  for (const auto& seg : segments) {
    ids.insert(ids.end(), seg.begin(), seg.end());
    ids.push_back(Vocab::kSep);
  }
  if (segments.empty()) ids.push_back(Vocab::kSep);
  if (ids.size() > max_len) {
    ids.resize(max_len);
    ids.back() = Vocab::kSep;
  }
  TokenSequence seq;
  seq.length = ids.size();
  ids.resize(max_len, Vocab::kPad);
  seq.ids = std::move(ids);
  return seq;
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  return frame_segments({map_tokens(text, vocab)}, max_len);
}

}  // namespace protofuse::encoder
