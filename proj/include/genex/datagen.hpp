#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "genex/text.hpp"
#include "genex/triple.hpp"
#include "json.hpp"

namespace genex {

class Vocab;

struct WikiSection {
  std::string header;
  std::string body;
};

struct WikiArticle {
  std::string title;
  std::vector<WikiSection> sections;
};

struct AnchorRecord {
  std::string target_page_id;
  std::string anchor_text;
};

using TokenCounter = std::function<std::size_t(const std::string&)>;

TokenCounter whitespace_counter();
// Counts subword pieces; the vocab must outlive the counter.
TokenCounter subword_counter(const Vocab& vocab);

struct LengthGates {
  TokenCounter count = whitespace_counter();
  std::size_t min_article_chars = 500;   // article body total, in characters
  std::size_t min_section_tokens = 20;   // section kept iff tokens >= this
  std::size_t min_document_tokens = 21;  // document kept iff tokens >= this
  std::size_t max_explanation_tokens = 15;
};

// Warnings are counted, never fatal.
struct DatagenStats {
  std::size_t malformed_records = 0;
  std::size_t missing_pages = 0;
  std::size_t dropped_short_articles = 0;
  std::size_t dropped_short_sections = 0;
  std::size_t dropped_stop_headers = 0;
  std::size_t dropped_long_explanations = 0;
  std::size_t dropped_short_documents = 0;
  std::size_t dropped_blocked_facets = 0;

  std::string summary() const;
};

const std::set<std::string>& default_stop_headers();
const std::set<std::string>& default_facet_blocklist();

// Parsers skip (and count) malformed records.
std::vector<WikiArticle> parse_wiki_articles(const std::vector<nlohmann::json>& records,
                                             DatagenStats& stats);
std::vector<AnchorRecord> parse_anchor_records(const std::vector<nlohmann::json>& records,
                                               DatagenStats& stats);
// Page records are {"page": id, "text": body}.
std::map<std::string, std::string> parse_pages(const std::vector<nlohmann::json>& records,
                                               DatagenStats& stats);

std::vector<ExplanationTriple> build_wiki_triples(const std::vector<WikiArticle>& articles,
                                                  const std::set<std::string>& stop_headers,
                                                  const LengthGates& gates, DatagenStats& stats);

using EmbeddingTable = std::unordered_map<std::string, std::vector<double>>;

// "token v1 ... vk" per line; all rows share k.
EmbeddingTable load_embeddings(const std::string& path);

struct SummaryOptions {
  std::size_t cap = 256;
  double threshold = 0.8;
  const EmbeddingTable* embeddings = nullptr;
  TokenCounter count = whitespace_counter();
  const StopwordSet* stopwords = nullptr;  // default list when null
};

// Sentences split at [.!?] followed by whitespace and an uppercase letter.
std::vector<std::string> split_sentences(const std::string& text);

std::string query_biased_summary(const std::string& document, const std::string& query,
                                 const SummaryOptions& options = {});

struct AnchorOptions {
  LengthGates gates;
  std::set<std::string> blocklist = default_facet_blocklist();
  const StopwordSet* stopwords = nullptr;
  // Page text is summarized against the query before lowercasing; nullopt keeps it whole.
  std::optional<SummaryOptions> summary = SummaryOptions{};
};

// Query-facet grouping result for one page, before post-processing.
struct AnchorGroup {
  std::string prefix;
  std::vector<std::string> suffixes;  // distinct, in first-seen order
};

std::vector<AnchorGroup> group_anchors(const std::vector<std::string>& anchors);

std::vector<ExplanationTriple> build_anchor_triples(const std::vector<AnchorRecord>& records,
                                                    const std::map<std::string, std::string>& pages,
                                                    const AnchorOptions& options,
                                                    DatagenStats& stats);

struct SynthOptions {
  std::size_t fields_per_doc = 4;
  std::size_t value_words = 2;
  std::size_t min_document_words = 24;
};

// Deterministic pronounceable pseudo-words, none of them "is".
std::vector<std::string> synthetic_words(std::size_t count);

// Words are split by index mod 3 into key, value and filler pools.
std::vector<ExplanationTriple> synth_keyvalue_dataset(std::size_t n,
                                                      const std::vector<std::string>& vocab_words,
                                                      const SynthOptions& options,
                                                      std::uint64_t seed);

}  // namespace genex
