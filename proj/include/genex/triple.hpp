#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace genex {

enum class TripleSource { kWiki, kAnchor, kSynthetic };

std::string to_string(TripleSource source);
TripleSource parse_source(const std::string& text);

// One (query, document, explanation) sample.
struct ExplanationTriple {
  std::string query;
  std::string document;
  std::string explanation;
  TripleSource source = TripleSource::kSynthetic;

  bool operator==(const ExplanationTriple&) const = default;
};

// JSONL with keys in fixed order: query, document, explanation, source.
std::string to_jsonl_line(const ExplanationTriple& triple);
ExplanationTriple triple_from_json(const nlohmann::json& record);

void write_triples(std::ostream& out, const std::vector<ExplanationTriple>& triples);
void write_triples(const std::string& path, const std::vector<ExplanationTriple>& triples);
std::vector<ExplanationTriple> read_triples(const std::string& path);

// Parsed JSONL objects; throws DataError naming the line of a parse failure.
std::vector<nlohmann::json> read_jsonl(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace genex
