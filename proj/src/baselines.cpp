#include "genex/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "genex/errors.hpp"
#include "genex/porter.hpp"
#include "genex/rng.hpp"

namespace genex {

namespace {

const StopwordSet& stopwords_or_default(const StopwordSet* s) { return s ? *s : default_stopwords(); }

std::vector<std::string> content_terms(const std::string& text, const StopwordSet& stop) {
  std::vector<std::string> out;
  for (auto& t : alnum_terms(text)) {
    if (!stop.count(t)) out.push_back(std::move(t));
  }
  return out;
}

std::vector<RankedTerm> top_terms(const TermGraph& g, const PageRankResult& pr, std::size_t k) {
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pr.scores[a] > pr.scores[b]; });
  std::vector<RankedTerm> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    const std::size_t v = order[i];
    out.push_back({g.surface[v], g.terms[v], pr.scores[v]});
  }
  return out;
}

}  // namespace

void TermGraph::add_edge(std::size_t a, std::size_t b, double w) {
  if (a == b) return;
  adjacency[a][b] += w;
  adjacency[b][a] += w;
}

std::optional<std::size_t> TermGraph::index_of(const std::string& term) const {
  auto it = std::find(terms.begin(), terms.end(), term);
  if (it == terms.end()) return std::nullopt;
  return static_cast<std::size_t>(it - terms.begin());
}

TermGraph build_term_graph(const std::string& text, std::size_t window, const StopwordSet* stopwords) {
  if (window < 2) throw UsageError("co-occurrence window must be at least 2");
  TermGraph g;
  std::map<std::string, std::size_t> ids;
  std::vector<std::size_t> seq;
  for (const auto& w : content_terms(text, stopwords_or_default(stopwords))) {
    const auto stem = porter_stem(w);
    auto [it, fresh] = ids.try_emplace(stem, g.terms.size());
    if (fresh) {
      g.terms.push_back(stem);
      g.surface.push_back(w);
      g.adjacency.emplace_back();
    }
    seq.push_back(it->second);
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    for (std::size_t j = i + 1; j < seq.size() && j - i < window; ++j) g.add_edge(seq[i], seq[j]);
  }
  return g;
}

PageRankResult pagerank(const TermGraph& graph, const std::optional<std::vector<double>>& teleport,
                        const PageRankOptions& options) {
  const std::size_t n = graph.size();
  if (n == 0) throw UsageError("pagerank on an empty graph");
  std::vector<double> v(n, 1.0 / static_cast<double>(n));
  if (teleport) {
    if (teleport->size() != n) throw UsageError("teleport vector has the wrong size");
    double total = 0.0;
    for (double p : *teleport) {
      if (!(p >= 0.0)) throw UsageError("teleport probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("teleport vector must sum to 1");
    v = *teleport;
  }
  std::vector<double> degree(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& [_, w] : graph.adjacency[j]) degree[j] += w;
  }

  const double d = options.damping;
  PageRankResult result;
  std::vector<double> x(n, 1.0 / static_cast<double>(n)), y(n);
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    double dangling = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (degree[j] == 0.0) dangling += x[j];
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double in = 0.0;
      for (const auto& [j, w] : graph.adjacency[i]) in += x[j] * w / degree[j];
      y[i] = (1.0 - d) * v[i] + d * dangling * v[i] + d * in;
      residual += std::abs(y[i] - x[i]);
    }
    x.swap(y);
    result.iterations = it;
    if (residual < options.tol) {
      result.converged = true;
      break;
    }
  }
  result.scores = std::move(x);
  return result;
}

std::vector<RankedTerm> textrank_keywords(const std::string& doc, std::size_t k, std::size_t window,
                                          const StopwordSet* stopwords) {
  auto g = build_term_graph(doc, window, stopwords);
  if (g.size() == 0) return {};
  return top_terms(g, pagerank(g), k);
}

std::vector<RankedTerm> ts_textrank_keywords(const std::string& doc, const std::string& query,
                                             std::size_t k, std::size_t window,
                                             const StopwordSet* stopwords) {
  auto g = build_term_graph(doc, window, stopwords);
  if (g.size() == 0) return {};
  std::set<std::size_t> present;
  for (const auto& t : content_terms(query, stopwords_or_default(stopwords))) {
    if (auto i = g.index_of(porter_stem(t))) present.insert(*i);
  }
  if (present.empty()) return top_terms(g, pagerank(g), k);
  std::vector<double> teleport(g.size(), 0.0);
  for (std::size_t i : present) teleport[i] = 1.0 / static_cast<double>(present.size());
  return top_terms(g, pagerank(g, teleport), k);
}

TfIdfIndex::TfIdfIndex(const std::vector<std::string>& corpus, const StopwordSet* stopwords)
    : n_(corpus.size()), stopwords_(stopwords_or_default(stopwords)) {
  if (corpus.empty()) throw UsageError("TF.IDF index needs at least one document");
  for (const auto& doc : corpus) {
    auto terms = content_terms(doc, stopwords_);
    std::set<std::string> unique(terms.begin(), terms.end());
    for (const auto& t : unique) ++df_[t];
  }
}

std::size_t TfIdfIndex::df(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

double TfIdfIndex::idf(const std::string& term) const {
  const std::size_t d = std::max<std::size_t>(df(term), 1);
  return std::log(static_cast<double>(n_) / static_cast<double>(d));
}

std::map<std::string, double> TfIdfIndex::vector(const std::string& text) const {
  std::map<std::string, double> tf;
  for (const auto& t : content_terms(text, stopwords_)) tf[t] += 1.0;
  for (auto& [t, w] : tf) w *= idf(t);
  return tf;
}

double tfidf_score(const std::string& query, const std::string& doc, const TfIdfIndex& index) {
  const auto q = index.vector(query);
  const auto d = index.vector(doc);
  double dot = 0.0, nq = 0.0, nd = 0.0;
  for (const auto& [t, w] : q) {
    nq += w * w;
    auto it = d.find(t);
    if (it != d.end()) dot += w * it->second;
  }
  for (const auto& [_, w] : d) nd += w * w;
  if (nq == 0.0 || nd == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(nq) * std::sqrt(nd)), 0.0, 1.0);
}

std::vector<std::string> explanation_features(const std::string& doc, const StopwordSet* stopwords) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& t : content_terms(doc, stopwords_or_default(stopwords))) {
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

std::string remove_terms(const std::string& doc, const std::vector<std::string>& removed) {
  std::vector<std::string> kept;
  for (auto& t : alnum_terms(doc)) {
    if (std::find(removed.begin(), removed.end(), t) == removed.end()) kept.push_back(std::move(t));
  }
  return join(kept);
}

std::vector<TokenScore> lime_explain(const std::string& query, const std::string& doc,
                                     const Ranker& ranker, const LimeOptions& options) {
  const auto features = explanation_features(doc, options.stopwords);
  const std::size_t f = features.size();
  if (f == 0) return {};
  const double base = ranker(query, remove_terms(doc, {}));
  // One-zero perturbations only reach f distinct documents.
  std::vector<double> without(f);
  for (std::size_t k = 0; k < f; ++k) without[k] = ranker(query, remove_terms(doc, {features[k]}));
  if (f == 1) return {{features[0], base - without[0]}};

  Rng rng(options.seed);
  const std::size_t rows = options.n_samples + 1;
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(f));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  y(0) = base;
  for (std::size_t r = 1; r < rows; ++r) {
    const std::size_t k = static_cast<std::size_t>(rng.below(f));
    x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = 0.0;
    y(static_cast<Eigen::Index>(r)) = without[k];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  y.array() -= y.mean();
  Eigen::MatrixXd a = x.transpose() * x;
  a.diagonal().array() += options.ridge;
  const Eigen::VectorXd beta = a.ldlt().solve(x.transpose() * y);

  std::vector<TokenScore> out;
  for (std::size_t k = 0; k < f; ++k) out.push_back({features[k], beta(static_cast<Eigen::Index>(k))});
  return out;
}

std::vector<TokenScore> sensitivity_explain(const std::string& query, const std::string& doc,
                                            const Ranker& ranker, const StopwordSet* stopwords) {
  const auto features = explanation_features(doc, stopwords);
  const double base = ranker(query, remove_terms(doc, {}));
  std::vector<TokenScore> out;
  for (const auto& t : features) out.push_back({t, base - ranker(query, remove_terms(doc, {t}))});
  return out;
}

std::vector<std::string> select_top_tokens(const std::vector<TokenScore>& scores) {
  if (scores.empty()) throw UsageError("select_top_tokens needs at least one score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].score > scores[b].score; });
  const double best = scores[order[0]].score;
  if (!(best > 0.0)) return {scores[order[0]].term};
  std::vector<std::string> out;
  for (std::size_t i : order) {
    if (out.size() == 3 || scores[i].score < 0.1 * best) break;
    out.push_back(scores[i].term);
  }
  return out;
}

}  // namespace genex
