#pragma once

#include <span>
#include <string>
#include <vector>

namespace genex {

using Words = std::vector<std::string>;

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Corpus-level BLEU: geometric mean of clipped n-gram precisions for
// n = 1..max_n times exp(min(0, 1 - r/c)). Any zero precision gives 0.
// Multiple references per candidate clip by the max reference count and use
// the closest reference length (ties to the shorter one).
double corpus_bleu(const std::vector<Words>& candidates,
                   const std::vector<std::vector<Words>>& references, int max_n);
double corpus_bleu(const std::vector<Words>& candidates, const std::vector<Words>& references,
                   int max_n);

// Per-sample BLEU; precisions for n >= 2 use add-one smoothing.
double sentence_bleu(const Words& candidate, const Words& reference, int max_n);

PRF rouge_n(const Words& candidate, const Words& reference, int n);
// Longest common subsequence based.
PRF rouge_l(const Words& candidate, const Words& reference);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-tailed
};

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

// I_x(a, b) by Lentz continued fraction.
double incomplete_beta(double a, double b, double x);
double student_t_two_tailed(double t, double df);

}  // namespace genex
