#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "docenc/common.hpp"

namespace docenc {

struct PRF {
  real precision = 0;
  real recall = 0;
  real f1 = 0;
};

// Micro precision/recall/F1 on the positive class; 0 when a denominator is 0.
PRF f1_score(std::span<const int> predictions, std::span<const int> golds);

// Fraction of examples whose top-scored item is gold. Each example is the
// gold-membership list in rank order (first element = top-ranked).
real precision_at_1(const std::vector<std::vector<int>>& ranked_gold);

using Tokens = std::vector<std::string>;

// Clipped n-gram overlap ROUGE-N.
PRF rouge_n(const Tokens& candidate, const Tokens& reference, size_t n);
// Longest-common-subsequence ROUGE-L.
PRF rouge_l(const Tokens& candidate, const Tokens& reference);
// Mean of ROUGE-1, ROUGE-2, ROUGE-L F1; the oracle-construction objective.
real rouge_avg(const Tokens& candidate, const Tokens& reference);

// Lowercased whitespace/punctuation tokens for ROUGE computations.
Tokens rouge_tokens(const std::string& text);

struct MetricReport {
  std::string task;
  std::vector<std::pair<std::string, real>> metrics;
  std::vector<std::pair<std::string, size_t>> counts;

  std::string to_json_line() const;
  std::string table() const;
};

}  // namespace docenc
