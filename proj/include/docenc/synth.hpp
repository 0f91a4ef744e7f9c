#pragma once

#include "docenc/config.hpp"
#include "docenc/tasks.hpp"

namespace docenc::synth {

// Desk-scale stand-ins for the corpora the tasks were designed around.
// All generators are deterministic in (count, seed).

// Documents of 3-6 topical segments, 3-5 sentences each, with disjoint
// per-topic vocabularies. Label 1 marks the last sentence of a segment.
std::vector<SegExample> segmentation(size_t count, uint64_t seed);

// One planted-keyword answer paragraph per question; the gold paragraph
// always contains the question keyword.
std::vector<RetrievalExample> retrieval(size_t count, uint64_t seed);

// Gold summary is the concatenation of the 1-3 sentences carrying the
// marker token.
std::vector<SummExample> summarization(size_t count, uint64_t seed);
extern const char* kSummMarker;

// Cross-block dependency corpus: the value token in the last block is
// determined by the key token in the first block and by nothing local.
struct PlantedDoc {
  Document doc;
  size_t pair_id = 0;
  size_t value_block = 0;
  size_t value_pos = 0;
};

std::vector<PlantedDoc> planted(size_t count, uint64_t seed, size_t num_pairs = 6);

// The word list random_text draws from, deterministic in (n, seed).
std::vector<std::string> random_word_list(size_t n, uint64_t seed);

// Random text over a vocabulary of `vocab_words` distinct tokens, for
// uniform-baseline checks.
std::vector<Document> random_text(size_t count, uint64_t seed, size_t vocab_words,
                                  size_t max_blocks = 4, size_t max_tokens = 6);

// Small repetitive corpus that a desk-scale model can overfit quickly.
std::vector<Document> overfit_corpus(size_t count, uint64_t seed);

// Writes <out_dir>/<task>.{train,dev,test}.jsonl in the task line-JSON
// formats ("planted" writes train plus a probe file with mask positions).
void write_files(TaskKind task, const std::string& out_dir, size_t count, uint64_t seed);
void write_planted_files(const std::string& out_dir, size_t count, uint64_t seed);

std::string seg_to_json(const SegExample& ex);
std::string ret_to_json(const RetrievalExample& ex);
std::string summ_to_json(const SummExample& ex);
std::string doc_to_json(const Document& doc);

}  // namespace docenc::synth
