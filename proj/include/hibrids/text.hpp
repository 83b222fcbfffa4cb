#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hibrids {

// Reserved marker strings. They survive tokenization as single tokens.
inline constexpr std::string_view kLevelDown = "[L_DOWN]";
inline constexpr std::string_view kLevelUp = "[L_UP]";
inline constexpr std::string_view kLevelSame = "[L_SAME]";
inline constexpr std::string_view kQsSep = "[QS_SEP]";
inline constexpr std::string_view kSecMarker = "[SEC]";

bool is_reserved_marker(std::string_view token);

std::vector<std::string> split_whitespace(std::string_view text);

/// Shared tokenizer used by every module.
///
/// Rules, applied to each whitespace-separated chunk:
///   - reserved markers (`[L_DOWN]`, `[SEC-L3]`, ...) are kept verbatim;
///   - ASCII letters are lowercased;
///   - leading and trailing ASCII punctuation characters are split off, one
///     token per character, keeping their order; inner punctuation stays
///     (`u.s.` -> `u.s` `.`, `don't` stays whole).
std::vector<std::string> tokenize(std::string_view text);

std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

/// Splits on `.`, `!` or `?` followed by whitespace. The terminator stays with
/// its sentence; empty pieces are dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// Number of tokens that contain at least one ASCII letter or digit.
std::size_t count_words(const std::vector<std::string>& tokens);

using NGram = std::vector<std::string>;
std::map<NGram, int> ngram_counts(const std::vector<std::string>& tokens, std::size_t n);

}  // namespace hibrids
