#include "genex/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "genex/errors.hpp"

namespace genex {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Words& words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::size_t total(const NgramCounts& counts) {
  std::size_t t = 0;
  for (const auto& [_, c] : counts) t += c;
  return t;
}

// Clipped matches of candidate n-grams against the per-n-gram max over refs.
std::size_t clipped_matches(const NgramCounts& cand, const std::vector<NgramCounts>& refs) {
  std::size_t matched = 0;
  for (const auto& [gram, count] : cand) {
    std::size_t max_ref = 0;
    for (const auto& r : refs) {
      auto it = r.find(gram);
      if (it != r.end()) max_ref = std::max(max_ref, it->second);
    }
    matched += std::min(count, max_ref);
  }
  return matched;
}

std::size_t closest_ref_length(std::size_t cand_len, const std::vector<Words>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t len) {
      return len > cand_len ? len - cand_len : cand_len - len;
    };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

void check_order(int max_n) {
  if (max_n < 1) throw UsageError("BLEU order must be >= 1");
}

PRF make_prf(double overlap, double cand_total, double ref_total) {
  PRF out;
  out.precision = cand_total > 0 ? overlap / cand_total : 0.0;
  out.recall = ref_total > 0 ? overlap / ref_total : 0.0;
  const double s = out.precision + out.recall;
  out.f1 = s > 0 ? 2.0 * out.precision * out.recall / s : 0.0;
  return out;
}

}  // namespace

double corpus_bleu(const std::vector<Words>& candidates,
                   const std::vector<std::vector<Words>>& references, int max_n) {
  check_order(max_n);
  if (candidates.empty()) throw UsageError("BLEU needs at least one candidate");
  if (candidates.size() != references.size()) {
    throw UsageError("BLEU: " + std::to_string(candidates.size()) + " candidates but " +
                     std::to_string(references.size()) + " reference sets");
  }
  std::vector<std::size_t> matched(static_cast<std::size_t>(max_n), 0);
  std::vector<std::size_t> totals(static_cast<std::size_t>(max_n), 0);
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& refs = references[s];
    if (refs.empty()) throw UsageError("BLEU: sample " + std::to_string(s) + " has no reference");
    cand_len += candidates[s].size();
    ref_len += closest_ref_length(candidates[s].size(), refs);
    for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
      const auto cand = ngrams(candidates[s], n);
      std::vector<NgramCounts> ref_counts;
      for (const auto& r : refs) ref_counts.push_back(ngrams(r, n));
      matched[n - 1] += clipped_matches(cand, ref_counts);
      totals[n - 1] += total(cand);
    }
  }
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < matched.size(); ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(totals[n]));
  }
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) /
                                                     static_cast<double>(cand_len)));
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double corpus_bleu(const std::vector<Words>& candidates, const std::vector<Words>& references,
                   int max_n) {
  std::vector<std::vector<Words>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back({r});
  return corpus_bleu(candidates, refs, max_n);
}

double sentence_bleu(const Words& candidate, const Words& reference, int max_n) {
  check_order(max_n);
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
    const auto cand = ngrams(candidate, n);
    const double matched = static_cast<double>(clipped_matches(cand, {ngrams(reference, n)}));
    const double tot = static_cast<double>(total(cand));
    const double precision = n == 1 ? (tot > 0 ? matched / tot : 0.0) : (matched + 1.0) / (tot + 1.0);
    if (precision <= 0.0) return 0.0;
    log_sum += std::log(precision);
  }
  const double bp = std::exp(std::min(
      0.0, 1.0 - static_cast<double>(reference.size()) / static_cast<double>(candidate.size())));
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

PRF rouge_n(const Words& candidate, const Words& reference, int n) {
  if (n < 1) throw UsageError("ROUGE order must be >= 1");
  const auto cand = ngrams(candidate, static_cast<std::size_t>(n));
  const auto ref = ngrams(reference, static_cast<std::size_t>(n));
  const double overlap = static_cast<double>(clipped_matches(cand, {ref}));
  return make_prf(overlap, static_cast<double>(total(cand)), static_cast<double>(total(ref)));
}

PRF rouge_l(const Words& candidate, const Words& reference) {
  const std::size_t m = candidate.size(), n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return make_prf(static_cast<double>(prev[n]), static_cast<double>(m), static_cast<double>(n));
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Use the symmetry relation where the continued fraction converges fast.
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_front) * h / a;
}

double student_t_two_tailed(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("paired t-test needs equal-length samples");
  const std::size_t n = a.size();
  if (n < 2) throw UsageError("paired t-test needs at least two pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = a[i] - b[i] - mean;
    ss += dev * dev;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  r.df = static_cast<double>(n - 1);
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_tailed(r.t, r.df);
  return r;
}

}  // namespace genex
