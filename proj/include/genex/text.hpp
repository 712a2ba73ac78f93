#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace genex {

// ASCII lowercasing; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view text);

// Collapses whitespace runs to one space and trims both ends.
std::string normalize_space(std::string_view text);

std::string join(const std::vector<std::string>& words, std::string_view sep = " ");

// UTF-8 aware split into characters; malformed bytes become one-byte chars.
std::vector<std::string> utf8_chars(std::string_view word);
std::size_t utf8_length(std::string_view text);

// Lowercased maximal runs of ASCII letters/digits (and any non-ASCII bytes).
std::vector<std::string> alnum_terms(std::string_view text);

using StopwordSet = std::unordered_set<std::string>;

// The built-in English list, shipped as data/stopwords.txt.
const StopwordSet& default_stopwords();
StopwordSet load_word_list(const std::string& path);

}  // namespace genex
