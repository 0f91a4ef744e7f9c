#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>

#include "docenc/checkpoint.hpp"
#include "docenc/config.hpp"
#include "docenc/encoder.hpp"
#include "docenc/metrics.hpp"

namespace docenc {

// Task-specific convex combination over encoder layers, parameterized
// through softmax so weights stay positive and sum to 1 structurally.
struct LayerMixer {
  Tensor raw;  // [L]
  Tensor weights(Graph& g) const;
  std::vector<real> weight_values() const;  // softmax of raw, no graph
};

LayerMixer make_mixer(ParamStore& store, const std::string& name, size_t layers, Rng& rng);
Tensor layer_mix(Graph& g, std::span<const Tensor> layers, const LayerMixer& mixer);

// linear -> ReLU -> linear scorer used by all three task heads.
struct FfnnHead {
  Tensor w1, b1, w2, b2;
  Tensor apply(Graph& g, const Tensor& in) const;
};

FfnnHead make_ffnn(ParamStore& store, const std::string& prefix, size_t in_dim, size_t hidden,
                   size_t out_dim, Rng& rng);

struct SegExample {
  Document doc;
  std::vector<int> labels;  // 1 = last sentence of a segment
};

struct RetrievalExample {
  Document doc;  // blocks are paragraphs
  std::string question;
  std::vector<size_t> gold;
};

struct SummExample {
  Document doc;  // blocks are sentences
  std::string summary;
  std::vector<size_t> oracle_picks;
  std::vector<real> oracle_gains;
};

std::vector<SegExample> load_seg_examples(const std::string& path, const Limits& limits);
std::vector<RetrievalExample> load_retrieval_examples(const std::string& path,
                                                      const Limits& limits);
// Loads and computes greedy oracle labels.
std::vector<SummExample> load_summ_examples(const std::string& path, const Limits& limits);

// s1 = (i+1)/K, s2 = first-paragraph indicator, s3 = tf-idf cosine with the
// question (idf over this document's paragraphs), s4 = fraction of question
// content words present, s5 = log(1 + paragraph length).
std::array<real, 5> retrieval_features(const Document& doc, const Tokens& question_tokens,
                                       size_t index);

struct OracleResult {
  std::vector<size_t> picks;
  std::vector<real> gains;
};

// Greedy ROUGE-maximizing selection of up to three sentences; stops early
// when no candidate yields positive gain.
OracleResult oracle_labels(const Document& doc, const std::string& gold_summary);

// Indices of the up-to-3 highest scores, ties by lower index, emitted in
// document order.
std::vector<size_t> select_summary(std::span<const real> scores);

struct TaskModel {
  Config cfg;
  ParamStore store;
  std::unique_ptr<HierEncoder> bi;
  std::unique_ptr<LrHlstm> lr;
  LayerMixer mixer;                    // retrieval and summarization
  FfnnHead head;
  LstmLayerParams summ_fwd, summ_bwd;  // refinement Bi-LSTM (summarization)

  size_t rep_dim() const;
  size_t layer_count() const { return cfg.encoder.global_layers + 1; }
  std::vector<Tensor> encode_top(Graph& g, const EncodedDoc& doc) const;
  std::vector<std::vector<Tensor>> encode_layers(Graph& g, const EncodedDoc& doc) const;
  std::vector<Tensor> encode_mixed(Graph& g, const EncodedDoc& doc) const;
};

TaskModel build_task_model(const Config& cfg);

// Parameter-name prefixes loaded from a checkpoint for each init scope.
std::vector<std::string> scope_prefixes(Arch arch, InitScope scope);

// --- segmentation ---
std::vector<Tensor> seg_logits(Graph& g, const TaskModel& m, const EncodedDoc& doc);
Tensor seg_loss(Graph& g, const TaskModel& m, const EncodedDoc& doc,
                const std::vector<int>& labels, real pos_weight);
std::vector<real> seg_boundary_probs(const TaskModel& m, const EncodedDoc& doc);

// --- retrieval ---
std::vector<Tensor> retrieval_score_tensors(Graph& g, const TaskModel& m,
                                            const RetrievalExample& ex, const Vocabulary& vocab);
Tensor retrieval_loss(Graph& g, const TaskModel& m, const RetrievalExample& ex,
                      const Vocabulary& vocab);
std::vector<real> retrieval_scores(const TaskModel& m, const RetrievalExample& ex,
                                   const Vocabulary& vocab);
// Frozen-encoder dot products with uniform layer weights, no feature head.
std::vector<real> zero_shot_scores(const TaskModel& m, const RetrievalExample& ex,
                                   const Vocabulary& vocab);

// --- summarization ---
std::vector<Tensor> summ_score_tensors(Graph& g, const TaskModel& m, const EncodedDoc& doc);
Tensor summ_train_loss(Graph& g, std::span<const Tensor> scores, const OracleResult& oracle);
Tensor summ_loss(Graph& g, const TaskModel& m, const SummExample& ex, const Vocabulary& vocab);
std::vector<real> summ_scores(const TaskModel& m, const SummExample& ex,
                              const Vocabulary& vocab);

// --- evaluation ---
MetricReport eval_seg(const TaskModel& m, std::span<const SegExample> data,
                      const Vocabulary& vocab);
MetricReport eval_retrieval(const TaskModel& m, std::span<const RetrievalExample> data,
                            const Vocabulary& vocab, bool zero_shot = false);
MetricReport eval_summ(const TaskModel& m, std::span<const SummExample> data,
                       const Vocabulary& vocab);

struct TaskData {
  std::vector<SegExample> seg;
  std::vector<RetrievalExample> ret;
  std::vector<SummExample> summ;
  size_t size(TaskKind t) const;
};

TaskData load_task_data(TaskKind task, const std::string& path, const Limits& limits);

struct FinetuneResult {
  Checkpoint best;
  MetricReport best_dev;
  std::vector<MetricReport> per_epoch;
  uint64_t steps = 0;
};

// Loads encoder weights per init scope, trains end-to-end, evaluates every
// epoch, returns the best-dev checkpoint. Pretraining-head parameters never
// enter the fine-tuning graph. on_step, when set, observes the model after
// every optimizer step.
using StepHook = std::function<void(uint64_t step, const TaskModel&)>;
FinetuneResult finetune_run(const Config& cfg, const TaskData& train, const TaskData& dev,
                            InitScope scope, const Checkpoint* from, std::ostream* log,
                            const StepHook& on_step = {});

}  // namespace docenc
