#pragma once

#include <map>
#include <string>
#include <vector>

#include "genex/metrics.hpp"
#include "json.hpp"

namespace genex {

// Metric names accepted by corpus_report: bleu1, bleu2, rouge1, rouge2, rougeL.
const std::vector<std::string>& known_metrics();
std::vector<std::string> parse_metric_list(const std::string& comma_separated);

struct ScoredRecord {
  std::string key;  // "id" field if present, else query + TAB + document
  std::string text;
};

// Keys records the same way corpus_report aligns them. `text_field` names the
// field holding the prediction or gold explanation.
std::vector<ScoredRecord> keyed_records(const std::vector<nlohmann::json>& records,
                                        const std::string& text_field);

struct MetricScores {
  double corpus = 0.0;         // corpus BLEU, or mean F1 for ROUGE
  double sentence_mean = 0.0;  // mean of per_sample
  std::vector<double> per_sample;

  bool operator==(const MetricScores&) const = default;
};

struct Report {
  std::vector<std::string> keys;
  std::vector<std::string> predictions;
  std::map<std::string, MetricScores> metrics;

  bool operator==(const Report&) const = default;
};

// Scores every prediction against all gold records sharing its key and keeps
// the best per-sample score. Throws DataError for a prediction without gold.
Report corpus_report(const std::vector<ScoredRecord>& predictions,
                     const std::vector<ScoredRecord>& gold,
                     const std::vector<std::string>& metrics);

nlohmann::json report_to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);
std::string report_to_tsv(const Report& report);

// Paired t-test per metric over the per-sample streams of two reports.
std::map<std::string, TTestResult> compare_reports(const Report& a, const Report& b);

}  // namespace genex
