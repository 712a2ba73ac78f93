#include "genex/text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "genex/errors.hpp"

namespace genex {

// Defined in the generated stopwords_data.cpp.
extern const char* const kStopwordData;

namespace {
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_term_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

StopwordSet parse_word_list(std::istream& in) {
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = normalize_space(to_lower(line));
    if (!w.empty() && w[0] != '#') words.insert(w);
  }
  return words;
}
}  // namespace

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::string normalize_space(std::string_view text) { return join(split_whitespace(text)); }

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> chars;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    chars.emplace_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

std::size_t utf8_length(std::string_view text) { return utf8_chars(text).size(); }

std::vector<std::string> alnum_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_term_byte(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && is_term_byte(text[i])) ++i;
    if (i > start) terms.push_back(to_lower(text.substr(start, i - start)));
  }
  return terms;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet words = [] {
    std::istringstream in(kStopwordData);
    return parse_word_list(in);
  }();
  return words;
}

StopwordSet load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word list " + path);
  return parse_word_list(in);
}

}  // namespace genex
