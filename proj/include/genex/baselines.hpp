#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "genex/text.hpp"

namespace genex {

// Undirected weighted co-occurrence graph. Vertices are stems in order of
// first occurrence; surface holds the first surface form of each stem.
struct TermGraph {
  std::vector<std::string> terms;
  std::vector<std::string> surface;
  std::vector<std::map<std::size_t, double>> adjacency;  // symmetric, no self-loops

  std::size_t size() const { return terms.size(); }
  void add_edge(std::size_t a, std::size_t b, double w = 1.0);
  std::optional<std::size_t> index_of(const std::string& term) const;
};

// Stemmed non-stopword terms of the text, linked when fewer than `window`
// positions apart in the filtered sequence.
TermGraph build_term_graph(const std::string& text, std::size_t window = 10,
                           const StopwordSet* stopwords = nullptr);

struct PageRankOptions {
  double damping = 0.85;
  double tol = 1e-8;
  std::size_t max_iter = 1000;
};

struct PageRankResult {
  std::vector<double> scores;
  std::size_t iterations = 0;
  bool converged = false;
};

// Power iteration from the uniform vector. Mass at isolated vertices is
// redistributed by the teleport vector.
PageRankResult pagerank(const TermGraph& graph, const std::optional<std::vector<double>>& teleport = {},
                        const PageRankOptions& options = {});

struct RankedTerm {
  std::string term;  // surface form
  std::string stem;
  double score = 0.0;
};

std::vector<RankedTerm> textrank_keywords(const std::string& doc, std::size_t k, std::size_t window = 10,
                                          const StopwordSet* stopwords = nullptr);
// Teleports uniformly over query stems present in the graph; with none
// present it is exactly textrank_keywords.
std::vector<RankedTerm> ts_textrank_keywords(const std::string& doc, const std::string& query,
                                             std::size_t k, std::size_t window = 10,
                                             const StopwordSet* stopwords = nullptr);

class TfIdfIndex {
 public:
  explicit TfIdfIndex(const std::vector<std::string>& corpus, const StopwordSet* stopwords = nullptr);

  std::size_t num_documents() const { return n_; }
  std::size_t df(const std::string& term) const;
  // ln(N / df), with df = 1 for unseen terms.
  double idf(const std::string& term) const;
  std::map<std::string, double> vector(const std::string& text) const;

 private:
  std::size_t n_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
  StopwordSet stopwords_;
};

// Cosine of raw-count tf times idf vectors; 0 when either vector is zero.
double tfidf_score(const std::string& query, const std::string& doc, const TfIdfIndex& index);

using Ranker = std::function<double(const std::string& query, const std::string& doc)>;

struct TokenScore {
  std::string term;
  double score = 0.0;
};

// Explanation features: unique non-stopword terms in order of first occurrence.
std::vector<std::string> explanation_features(const std::string& doc, const StopwordSet* stopwords = nullptr);

// The document as its lowercase terms with every occurrence of `removed` dropped.
std::string remove_terms(const std::string& doc, const std::vector<std::string>& removed);

struct LimeOptions {
  std::size_t n_samples = 500;
  double ridge = 1e-3;
  std::uint64_t seed = 0;
  const StopwordSet* stopwords = nullptr;
};

// Each perturbation zeroes one random feature; ranker scores are regressed on
// presence indicators with an unpenalized intercept.
std::vector<TokenScore> lime_explain(const std::string& query, const std::string& doc,
                                     const Ranker& ranker, const LimeOptions& options = {});

std::vector<TokenScore> sensitivity_explain(const std::string& query, const std::string& doc,
                                            const Ranker& ranker, const StopwordSet* stopwords = nullptr);

// Scores >= 10% of the maximum, at most three, by descending score with
// input order breaking ties. Nonpositive maximum: the single best token.
std::vector<std::string> select_top_tokens(const std::vector<TokenScore>& scores);

}  // namespace genex
