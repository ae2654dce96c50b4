#include "protofuse/corpus/text.hpp"

#include <cctype>

namespace protofuse::corpus {
namespace {

bool is_word(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

bool is_url(std::string_view token) {
  return starts_with_ci(token, "http://") || starts_with_ci(token, "https://") ||
         starts_with_ci(token, "www.");
}

// Rewrites mentions and hashtags inside a single whitespace-free token.
// Replacements are padded with spaces so the pieces never fuse with
// neighbouring characters into something a second pass would rewrite.
std::string rewrite_token(std::string_view token) {
  std::string out;
  std::size_t i = 0;
  while (i < token.size()) {
    const char c = token[i];
    if ((c == '@' || c == '#') && i + 1 < token.size() && is_word(token[i + 1])) {
      std::size_t j = i + 1;
      while (j < token.size() && is_word(token[j])) ++j;
      if (c == '@') {
        out += " <user> ";
      } else {
        out += ' ';
        for (const auto& word : split_hashtag(token.substr(i + 1, j - i - 1))) {
          out += word;
          out += ' ';
        }
      }
      i = j;
    } else {
      out += c;
      ++i;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> split_hashtag(std::string_view body) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '_') {
      flush();
      continue;
    }
    if (!cur.empty()) {
      const char prev = cur.back();
      const bool digit_edge = is_digit(c) != is_digit(prev);
      const bool lower_to_upper = is_lower(prev) && is_upper(c);
      // "HTMLParser": break before the last capital of an acronym run.
      const bool acronym_end = is_upper(prev) && is_upper(c) && i + 1 < body.size() &&
                               is_lower(body[i + 1]);
      if (digit_edge || lower_to_upper || acronym_end) flush();
    }
    cur += c;
  }
  flush();
  return words;
}

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string preprocess_text(std::string_view raw) {
  std::string ascii;
  ascii.reserve(raw.size());
  for (char c : raw) {
    if (static_cast<unsigned char>(c) < 0x80) ascii += c;
  }

  std::string rewritten;
  for (const auto& token : split_ws(ascii)) {
    rewritten += ' ';
    rewritten += is_url(token) ? std::string("<url>") : rewrite_token(token);
  }
  for (auto& c : rewritten) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  std::string out;
  std::string_view last;
  const auto tokens = split_ws(rewritten);
  for (const auto& token : tokens) {
    if (token == last) continue;
    if (!out.empty()) out += ' ';
    out += token;
    last = token;
  }
  return out;
}

}  // namespace protofuse::corpus
