#include "docenc/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include <json.hpp>

#include "docenc/corpus.hpp"

namespace docenc {

PRF f1_score(std::span<const int> predictions, std::span<const int> golds) {
  if (predictions.size() != golds.size())
    throw DataError("f1: prediction/gold length mismatch: " +
                    std::to_string(predictions.size()) + " vs " +
                    std::to_string(golds.size()));
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == 1 && golds[i] == 1) ++tp;
    if (predictions[i] == 1 && golds[i] == 0) ++fp;
    if (predictions[i] == 0 && golds[i] == 1) ++fn;
  }
  PRF r;
  r.precision = tp + fp ? static_cast<real>(tp) / static_cast<real>(tp + fp) : 0;
  r.recall = tp + fn ? static_cast<real>(tp) / static_cast<real>(tp + fn) : 0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0;
  return r;
}

real precision_at_1(const std::vector<std::vector<int>>& ranked_gold) {
  if (ranked_gold.empty()) throw DataError("precision_at_1: no examples");
  size_t hits = 0;
  for (const auto& ex : ranked_gold) {
    if (ex.empty()) throw DataError("precision_at_1: example with no paragraphs");
    if (ex.front() == 1) ++hits;
  }
  return static_cast<real>(hits) / static_cast<real>(ranked_gold.size());
}

static std::map<std::vector<std::string>, size_t> ngram_counts(const Tokens& toks, size_t n) {
  std::map<std::vector<std::string>, size_t> counts;
  if (toks.size() < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<std::string>(toks.begin() + static_cast<ptrdiff_t>(i),
                                      toks.begin() + static_cast<ptrdiff_t>(i + n))];
  return counts;
}

static PRF prf_from_counts(real overlap, real cand, real ref) {
  PRF r;
  r.precision = cand > 0 ? overlap / cand : 0;
  r.recall = ref > 0 ? overlap / ref : 0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0;
  return r;
}

PRF rouge_n(const Tokens& candidate, const Tokens& reference, size_t n) {
  if (n == 0) throw DataError("rouge_n: n must be at least 1");
  auto cc = ngram_counts(candidate, n);
  auto rc = ngram_counts(reference, n);
  size_t overlap = 0, cand_total = 0, ref_total = 0;
  for (const auto& [k, v] : cc) cand_total += v;
  for (const auto& [k, v] : rc) ref_total += v;
  for (const auto& [k, v] : cc) {
    auto it = rc.find(k);
    if (it != rc.end()) overlap += std::min(v, it->second);  // clipped
  }
  return prf_from_counts(static_cast<real>(overlap), static_cast<real>(cand_total),
                         static_cast<real>(ref_total));
}

PRF rouge_l(const Tokens& candidate, const Tokens& reference) {
  const size_t n = candidate.size(), m = reference.size();
  if (n == 0 || m == 0) return PRF{};
  std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1
                                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const real lcs = static_cast<real>(prev[m]);
  return prf_from_counts(lcs, static_cast<real>(n), static_cast<real>(m));
}

real rouge_avg(const Tokens& candidate, const Tokens& reference) {
  return (rouge_n(candidate, reference, 1).f1 + rouge_n(candidate, reference, 2).f1 +
          rouge_l(candidate, reference).f1) /
         3;
}

Tokens rouge_tokens(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return tokenize(lower);
}

std::string MetricReport::to_json_line() const {
  nlohmann::json j;
  j["task"] = task;
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  for (const auto& [k, v] : counts) j["counts"][k] = v;
  return j.dump();
}

std::string MetricReport::table() const {
  std::ostringstream os;
  os << "task: " << task << "\n";
  for (const auto& [k, v] : metrics) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", static_cast<double>(v));
    os << "  " << k << std::string(k.size() < 12 ? 12 - k.size() : 1, ' ') << buf << "\n";
  }
  for (const auto& [k, v] : counts)
    os << "  " << k << std::string(k.size() < 12 ? 12 - k.size() : 1, ' ') << v << "\n";
  return os.str();
}

}  // namespace docenc
