#include "genex/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "genex/errors.hpp"
#include "genex/porter.hpp"
#include "genex/rng.hpp"
#include "genex/vocab.hpp"

namespace genex {

using nlohmann::json;

namespace {

std::string clean(const std::string& text) { return normalize_space(to_lower(text)); }

bool nonempty_string(const json& j, const char* key) {
  return j.contains(key) && j[key].is_string() && !normalize_space(j[key].get<std::string>()).empty();
}

const StopwordSet& stopwords_or_default(const StopwordSet* s) {
  return s ? *s : default_stopwords();
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Drops words from the end until the counter fits the cap.
std::string truncate_to(const std::string& sentence, std::size_t cap, const TokenCounter& count) {
  auto words = split_whitespace(sentence);
  while (!words.empty() && count(join(words)) > cap) words.pop_back();
  return join(words);
}

}  // namespace

TokenCounter whitespace_counter() {
  return [](const std::string& text) { return split_whitespace(text).size(); };
}

TokenCounter subword_counter(const Vocab& vocab) {
  return [&vocab](const std::string& text) { return vocab.tokenize(text).size(); };
}

std::string DatagenStats::summary() const {
  std::ostringstream out;
  out << "malformed=" << malformed_records << " missing_pages=" << missing_pages
      << " short_articles=" << dropped_short_articles << " short_sections=" << dropped_short_sections
      << " stop_headers=" << dropped_stop_headers << " long_explanations=" << dropped_long_explanations
      << " short_documents=" << dropped_short_documents << " blocked_facets=" << dropped_blocked_facets;
  return out.str();
}

const std::set<std::string>& default_stop_headers() {
  static const std::set<std::string> headers = {"references", "see also", "external links",
                                                "further reading", "notes", "bibliography"};
  return headers;
}

const std::set<std::string>& default_facet_blocklist() {
  static const std::set<std::string> words = {"homepage", "website", "webpage", "site",
                                              "www",      "http",    "https",   "com",
                                              "link",     "links",   "click",   "here"};
  return words;
}

std::vector<WikiArticle> parse_wiki_articles(const std::vector<json>& records, DatagenStats& stats) {
  std::vector<WikiArticle> out;
  for (const auto& r : records) {
    if (!r.is_object() || !nonempty_string(r, "title") || !r.contains("sections") ||
        !r["sections"].is_array()) {
      ++stats.malformed_records;
      continue;
    }
    WikiArticle a;
    a.title = r["title"].get<std::string>();
    bool ok = true;
    for (const auto& s : r["sections"]) {
      if (!s.is_object() || !nonempty_string(s, "header") || !s.contains("body") ||
          !s["body"].is_string()) {
        ok = false;
        break;
      }
      a.sections.push_back({s["header"].get<std::string>(), s["body"].get<std::string>()});
    }
    if (!ok) {
      ++stats.malformed_records;
      continue;
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AnchorRecord> parse_anchor_records(const std::vector<json>& records, DatagenStats& stats) {
  std::vector<AnchorRecord> out;
  for (const auto& r : records) {
    if (!r.is_object() || !nonempty_string(r, "page") || !nonempty_string(r, "anchor")) {
      ++stats.malformed_records;
      continue;
    }
    out.push_back({r["page"].get<std::string>(), r["anchor"].get<std::string>()});
  }
  return out;
}

std::map<std::string, std::string> parse_pages(const std::vector<json>& records, DatagenStats& stats) {
  std::map<std::string, std::string> out;
  for (const auto& r : records) {
    if (!r.is_object() || !nonempty_string(r, "page") || !nonempty_string(r, "text")) {
      ++stats.malformed_records;
      continue;
    }
    out[r["page"].get<std::string>()] = r["text"].get<std::string>();
  }
  return out;
}

std::vector<ExplanationTriple> build_wiki_triples(const std::vector<WikiArticle>& articles,
                                                  const std::set<std::string>& stop_headers,
                                                  const LengthGates& gates, DatagenStats& stats) {
  std::vector<ExplanationTriple> out;
  for (const auto& article : articles) {
    const std::string query = clean(article.title);
    if (query.empty() || article.sections.empty()) {
      ++stats.malformed_records;
      continue;
    }
    std::size_t chars = 0;
    for (const auto& s : article.sections) chars += utf8_length(s.body);
    if (chars < gates.min_article_chars) {
      ++stats.dropped_short_articles;
      continue;
    }
    for (const auto& s : article.sections) {
      const std::string header = clean(s.header);
      const std::string body = clean(s.body);
      if (header.empty()) {
        ++stats.malformed_records;
        continue;
      }
      if (stop_headers.count(header)) {
        ++stats.dropped_stop_headers;
        continue;
      }
      const std::size_t body_tokens = gates.count(body);
      if (body_tokens < gates.min_section_tokens) {
        ++stats.dropped_short_sections;
        continue;
      }
      if (gates.count(header) > gates.max_explanation_tokens) {
        ++stats.dropped_long_explanations;
        continue;
      }
      if (body_tokens < gates.min_document_tokens) {
        ++stats.dropped_short_documents;
        continue;
      }
      out.push_back({query, body, header, TripleSource::kWiki});
    }
  }
  return out;
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings '" + path + "'");
  EmbeddingTable table;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw DataError(path + ":" + std::to_string(lineno) + ": no vector");
    std::vector<double> v;
    v.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(fields[i], &used));
        if (used != fields[i].size()) throw std::invalid_argument(fields[i]);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" + fields[i] + "'");
      }
    }
    if (dim == 0) dim = v.size();
    if (v.size() != dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                      " values, got " + std::to_string(v.size()));
    }
    table[to_lower(fields[0])] = std::move(v);
  }
  return table;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_terminal(text[i])) continue;
    std::size_t end = i;
    while (end + 1 < n && is_terminal(text[end + 1])) ++end;
    std::size_t j = end + 1;
    if (j >= n || !is_space(text[j])) continue;
    while (j < n && is_space(text[j])) ++j;
    if (j < n && is_upper(text[j])) {
      auto s = normalize_space(std::string_view(text).substr(start, end + 1 - start));
      if (!s.empty()) out.push_back(std::move(s));
      start = j;
      i = j - 1;
    }
  }
  auto tail = normalize_space(std::string_view(text).substr(start));
  if (!tail.empty()) out.push_back(std::move(tail));
  return out;
}

std::string query_biased_summary(const std::string& document, const std::string& query,
                                 const SummaryOptions& options) {
  const auto sentences = split_sentences(document);
  if (sentences.empty()) throw DataError("cannot summarize an empty document");
  if (options.cap == 0) throw UsageError("summary cap must be positive");
  const auto& stop = stopwords_or_default(options.stopwords);

  std::vector<std::string> qterms;
  for (auto& t : alnum_terms(query)) {
    if (!stop.count(t)) qterms.push_back(t);
  }
  if (qterms.empty()) qterms = alnum_terms(query);
  std::set<std::string> qstems;
  for (const auto& t : qterms) qstems.insert(porter_stem(t));

  const std::size_t n = sentences.size();
  std::vector<bool> selected(n, false);
  std::vector<double> similarity(n, 0.0);
  std::vector<std::size_t> length(n);
  for (std::size_t s = 0; s < n; ++s) {
    length[s] = options.count(sentences[s]);
    const auto terms = alnum_terms(sentences[s]);
    for (const auto& t : terms) {
      if (qstems.count(porter_stem(t))) selected[s] = true;
    }
    if (options.embeddings) {
      double best = -1.0;
      for (const auto& q : qterms) {
        auto qi = options.embeddings->find(q);
        if (qi == options.embeddings->end()) continue;
        for (const auto& t : terms) {
          auto ti = options.embeddings->find(t);
          if (ti == options.embeddings->end()) continue;
          best = std::max(best, cosine(qi->second, ti->second));
        }
      }
      similarity[s] = std::max(best, 0.0);
      if (best >= options.threshold) selected[s] = true;
    }
  }

  std::vector<bool> keep(n, false);
  std::size_t total = 0;
  std::size_t selected_total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (selected[s]) selected_total += length[s];
  }
  std::string truncated;
  std::size_t truncated_at = n;
  if (selected_total > options.cap) {
    // Stop at the first selected sentence that would overflow.
    for (std::size_t s = 0; s < n; ++s) {
      if (!selected[s]) continue;
      if (total + length[s] > options.cap) {
        if (total == 0) {
          truncated = truncate_to(sentences[s], options.cap, options.count);
          truncated_at = s;
        }
        break;
      }
      keep[s] = true;
      total += length[s];
    }
  } else {
    for (std::size_t s = 0; s < n; ++s) {
      if (selected[s]) keep[s] = true;
    }
    total = selected_total;
    std::vector<std::size_t> rest;
    for (std::size_t s = 0; s < n; ++s) {
      if (!selected[s]) rest.push_back(s);
    }
    std::stable_sort(rest.begin(), rest.end(),
                     [&](std::size_t a, std::size_t b) { return similarity[a] > similarity[b]; });
    for (std::size_t s : rest) {
      if (total + length[s] <= options.cap) {
        keep[s] = true;
        total += length[s];
      }
    }
    if (total == 0 && !rest.empty()) {
      truncated_at = rest.front();
      truncated = truncate_to(sentences[truncated_at], options.cap, options.count);
    }
  }

  std::vector<std::string> parts;
  for (std::size_t s = 0; s < n; ++s) {
    if (keep[s]) parts.push_back(sentences[s]);
    else if (s == truncated_at && !truncated.empty()) parts.push_back(truncated);
  }
  return join(parts);
}

std::vector<AnchorGroup> group_anchors(const std::vector<std::string>& anchors) {
  std::vector<std::vector<std::string>> words;
  for (const auto& a : anchors) words.push_back(split_whitespace(clean(a)));
  std::vector<bool> consumed(words.size(), false);
  std::vector<AnchorGroup> groups;

  while (true) {
    std::map<std::vector<std::string>, std::set<std::vector<std::string>>> suffixes;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (consumed[i]) continue;
      const auto& w = words[i];
      for (std::size_t k = 1; k < w.size(); ++k) {
        suffixes[{w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k)}].insert(
            {w.begin() + static_cast<std::ptrdiff_t>(k), w.end()});
      }
    }
    const std::vector<std::string>* best = nullptr;
    for (const auto& [prefix, sfx] : suffixes) {
      if (sfx.size() < 2) continue;
      // Map order makes the first of equal length the lexicographically smallest.
      if (!best || prefix.size() > best->size()) best = &prefix;
    }
    if (!best) break;

    AnchorGroup g;
    g.prefix = join(*best);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto& w = words[i];
      if (consumed[i] || w.size() <= best->size() ||
          !std::equal(best->begin(), best->end(), w.begin())) {
        continue;
      }
      consumed[i] = true;
      auto s = join({w.begin() + static_cast<std::ptrdiff_t>(best->size()), w.end()});
      if (seen.insert(s).second) g.suffixes.push_back(std::move(s));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<ExplanationTriple> build_anchor_triples(const std::vector<AnchorRecord>& records,
                                                    const std::map<std::string, std::string>& pages,
                                                    const AnchorOptions& options,
                                                    DatagenStats& stats) {
  std::vector<std::string> page_order;
  std::map<std::string, std::vector<std::string>> by_page;
  for (const auto& r : records) {
    auto [it, fresh] = by_page.try_emplace(r.target_page_id);
    if (fresh) page_order.push_back(r.target_page_id);
    it->second.push_back(r.anchor_text);
  }
  const auto& stop = stopwords_or_default(options.stopwords);
  const auto& gates = options.gates;

  std::vector<ExplanationTriple> out;
  for (const auto& page : page_order) {
    for (const auto& group : group_anchors(by_page[page])) {
      auto text = pages.find(page);
      if (text == pages.end()) {
        ++stats.missing_pages;
        continue;
      }
      std::string document;
      if (options.summary) {
        document = clean(query_biased_summary(text->second, group.prefix, *options.summary));
      } else {
        document = clean(text->second);
      }
      if (gates.count(document) < gates.min_document_tokens) {
        ++stats.dropped_short_documents;
        continue;
      }
      for (const auto& suffix : group.suffixes) {
        auto facet = split_whitespace(suffix);
        std::size_t lead = 0;
        while (lead < facet.size() && stop.count(facet[lead])) ++lead;
        facet.erase(facet.begin(), facet.begin() + static_cast<std::ptrdiff_t>(lead));
        const bool blocked = std::any_of(facet.begin(), facet.end(), [&](const std::string& w) {
          return options.blocklist.count(w) > 0;
        });
        if (facet.empty() || blocked) {
          ++stats.dropped_blocked_facets;
          continue;
        }
        const auto explanation = join(facet);
        if (gates.count(explanation) > gates.max_explanation_tokens) {
          ++stats.dropped_long_explanations;
          continue;
        }
        out.push_back({group.prefix, document, explanation, TripleSource::kAnchor});
      }
    }
  }
  return out;
}

std::vector<std::string> synthetic_words(std::size_t count) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::vector<std::string> syllables;
  for (char c : consonants) {
    for (char v : vowels) syllables.push_back(std::string{c, v});
  }
  const std::size_t s = syllables.size();
  const std::size_t space = s * s;
  if (count > space) throw UsageError("at most " + std::to_string(space) + " synthetic words");
  // 2477 is coprime to the word space, so the stride visits each word once.
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = (i * 2477) % space;
    out.push_back(syllables[k / s] + syllables[k % s]);
  }
  return out;
}

std::vector<ExplanationTriple> synth_keyvalue_dataset(std::size_t n,
                                                      const std::vector<std::string>& vocab_words,
                                                      const SynthOptions& options,
                                                      std::uint64_t seed) {
  if (options.fields_per_doc < 2) throw UsageError("fields_per_doc must be at least 2");
  if (options.value_words < 1) throw UsageError("value_words must be at least 1");
  std::vector<std::string> keys, values, filler;
  std::set<std::string> seen;
  for (const auto& raw : vocab_words) {
    auto w = clean(raw);
    if (w.empty() || w == "is" || w.find(' ') != std::string::npos || !seen.insert(w).second) continue;
    std::vector<std::string>* pools[] = {&keys, &values, &filler};
    pools[(seen.size() - 1) % 3]->push_back(w);
  }
  if (keys.size() < options.fields_per_doc || values.empty() || filler.empty()) {
    throw UsageError("not enough distinct words for " + std::to_string(options.fields_per_doc) +
                     " fields per document");
  }

  std::vector<ExplanationTriple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first fields_per_doc slots are a uniform draw.
    for (std::size_t f = 0; f < options.fields_per_doc; ++f) {
      std::swap(order[f], order[f + rng.below(order.size() - f)]);
    }
    std::vector<std::string> items;
    std::vector<std::string> explanations;
    std::size_t words = 0;
    for (std::size_t f = 0; f < options.fields_per_doc; ++f) {
      std::vector<std::string> v;
      for (std::size_t k = 0; k < options.value_words; ++k) v.push_back(values[rng.below(values.size())]);
      explanations.push_back(join(v));
      items.push_back(keys[order[f]] + " is " + explanations.back());
      words += 2 + options.value_words;
    }
    while (words < options.min_document_words) {
      items.push_back(filler[rng.below(filler.size())]);
      ++words;
    }
    const std::size_t target = rng.below(options.fields_per_doc);
    const std::string query = keys[order[target]];
    rng.shuffle(items);
    out.push_back({query, join(items), explanations[target], TripleSource::kSynthetic});
  }
  return out;
}

}  // namespace genex
