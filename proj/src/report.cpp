#include "genex/report.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "genex/errors.hpp"
#include "genex/text.hpp"

namespace genex {

using nlohmann::json;

const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names = {"bleu1", "bleu2", "rouge1", "rouge2", "rougeL"};
  return names;
}

std::vector<std::string> parse_metric_list(const std::string& comma_separated) {
  std::vector<std::string> out;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = normalize_space(item);
    if (item.empty()) continue;
    const auto& known = known_metrics();
    if (std::find(known.begin(), known.end(), item) == known.end()) {
      throw UsageError("unknown metric '" + item + "'");
    }
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw UsageError("no metrics selected");
  return out;
}

std::vector<ScoredRecord> keyed_records(const std::vector<json>& records,
                                        const std::string& text_field) {
  std::vector<ScoredRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    try {
      ScoredRecord s;
      if (r.contains("id")) {
        s.key = r["id"].is_string() ? r["id"].get<std::string>() : r["id"].dump();
      } else {
        s.key = r.at("query").get<std::string>() + "\t" + r.at("document").get<std::string>();
      }
      if (r.contains(text_field)) {
        s.text = r.at(text_field).get<std::string>();
      } else {
        s.text = r.at("explanation").get<std::string>();
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError("record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

Report corpus_report(const std::vector<ScoredRecord>& predictions,
                     const std::vector<ScoredRecord>& gold,
                     const std::vector<std::string>& metrics) {
  if (predictions.empty()) throw DataError("no predictions to evaluate");
  std::unordered_map<std::string, std::vector<Words>> refs_by_key;
  for (const auto& g : gold) refs_by_key[g.key].push_back(split_whitespace(g.text));

  Report report;
  std::vector<Words> candidates;
  std::vector<std::vector<Words>> references;
  for (const auto& p : predictions) {
    auto it = refs_by_key.find(p.key);
    if (it == refs_by_key.end()) throw DataError("prediction '" + p.key + "' has no gold record");
    report.keys.push_back(p.key);
    report.predictions.push_back(p.text);
    candidates.push_back(split_whitespace(p.text));
    references.push_back(it->second);
  }

  for (const auto& name : metrics) {
    MetricScores scores;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
      double best = 0.0;
      for (const auto& ref : references[s]) {
        double v = 0.0;
        if (name == "bleu1") v = sentence_bleu(candidates[s], ref, 1);
        else if (name == "bleu2") v = sentence_bleu(candidates[s], ref, 2);
        else if (name == "rouge1") v = rouge_n(candidates[s], ref, 1).f1;
        else if (name == "rouge2") v = rouge_n(candidates[s], ref, 2).f1;
        else if (name == "rougeL") v = rouge_l(candidates[s], ref).f1;
        else throw UsageError("unknown metric '" + name + "'");
        best = std::max(best, v);
      }
      scores.per_sample.push_back(best);
    }
    double mean = 0.0;
    for (double v : scores.per_sample) mean += v;
    mean /= static_cast<double>(scores.per_sample.size());
    scores.sentence_mean = mean;
    if (name == "bleu1") scores.corpus = corpus_bleu(candidates, references, 1);
    else if (name == "bleu2") scores.corpus = corpus_bleu(candidates, references, 2);
    else scores.corpus = mean;
    report.metrics[name] = std::move(scores);
  }
  return report;
}

json report_to_json(const Report& report) {
  json j;
  j["samples"] = json::array();
  for (std::size_t i = 0; i < report.keys.size(); ++i) {
    j["samples"].push_back({{"key", report.keys[i]}, {"prediction", report.predictions[i]}});
  }
  j["metrics"] = json::object();
  for (const auto& [name, s] : report.metrics) {
    j["metrics"][name] = {
        {"corpus", s.corpus}, {"sentence_mean", s.sentence_mean}, {"per_sample", s.per_sample}};
  }
  return j;
}

Report report_from_json(const json& j) {
  Report r;
  try {
    for (const auto& s : j.at("samples")) {
      r.keys.push_back(s.at("key").get<std::string>());
      r.predictions.push_back(s.at("prediction").get<std::string>());
    }
    for (const auto& [name, m] : j.at("metrics").items()) {
      MetricScores s;
      s.corpus = m.at("corpus").get<double>();
      s.sentence_mean = m.at("sentence_mean").get<double>();
      s.per_sample = m.at("per_sample").get<std::vector<double>>();
      r.metrics[name] = std::move(s);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_to_tsv(const Report& report) {
  auto clean = [](std::string s) {
    std::replace(s.begin(), s.end(), '\t', ' ');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
  };
  std::ostringstream out;
  out.precision(17);
  out << "key\tprediction";
  for (const auto& [name, _] : report.metrics) out << '\t' << name;
  out << '\n';
  for (std::size_t i = 0; i < report.keys.size(); ++i) {
    out << clean(report.keys[i]) << '\t' << clean(report.predictions[i]);
    for (const auto& [_, s] : report.metrics) out << '\t' << s.per_sample[i];
    out << '\n';
  }
  return out.str();
}

std::map<std::string, TTestResult> compare_reports(const Report& a, const Report& b) {
  if (a.keys != b.keys) throw DataError("reports are not aligned on the same samples");
  std::map<std::string, TTestResult> out;
  for (const auto& [name, sa] : a.metrics) {
    auto it = b.metrics.find(name);
    if (it == b.metrics.end()) continue;
    out[name] = paired_ttest(sa.per_sample, it->second.per_sample);
  }
  return out;
}

}  // namespace genex
