#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protofuse::corpus {

/// Normalizes a raw social-media post:
///   - drops non-ASCII bytes
///   - tokens starting with http://, https:// or www. become `<url>`
///   - `@handle` becomes `<user>`
///   - `#CamelCase2020` becomes `camel case 2020`
///   - lower-cases, collapses whitespace, and folds runs of a repeated token
///     into a single occurrence
/// The result is a fixed point: preprocess_text(preprocess_text(s)) equals
/// preprocess_text(s).
std::string preprocess_text(std::string_view raw);

/// Splits a hashtag body on camel-case, digit and underscore boundaries.
/// "HateSpeech2020" -> {"Hate", "Speech", "2020"}. Case is preserved.
std::vector<std::string> split_hashtag(std::string_view body);

/// Whitespace tokenization.
std::vector<std::string> split_ws(std::string_view text);

std::string trim(std::string_view s);

}  // namespace protofuse::corpus
