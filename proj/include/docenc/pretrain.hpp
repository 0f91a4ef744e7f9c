#pragma once

#include <memory>
#include <ostream>

#include "docenc/checkpoint.hpp"
#include "docenc/config.hpp"
#include "docenc/encoder.hpp"

namespace docenc {

struct MaskSet {
  std::vector<std::pair<size_t, size_t>> positions;  // (block, token), sorted
  real rate = 0;

  bool contains(size_t block, size_t token) const;
};

// Independent Bernoulli(rate) per token; resamples while empty so a non-empty
// document always yields at least one masked position.
MaskSet sample_mask(const Document& doc, real rate, Rng& rng);

// The document with tokens at Z replaced by the mask symbol. Masked positions
// carry no trace of the original spelling (token string and character
// sequence both replaced).
using MaskedDocument = Document;
MaskedDocument apply_mask(const Document& doc, const MaskSet& z);

// Feed-forward combiner over concatenated context vectors with an output
// projection to vocabulary logits. Used only at pretraining time.
struct PredictionHead {
  Tensor w1, b1;  // [hidden x in_dim]
  Tensor w2, b2;  // [V x hidden]

  Tensor logits(Graph& g, const Tensor& ctx) const;
  Tensor logits(Graph& g, const Tensor& a, const Tensor& b) const;
};

PredictionHead make_head(ParamStore& store, const std::string& prefix, size_t in_dim,
                         size_t hidden, size_t vocab, Rng& rng);

// loss is the mean negative log-likelihood over `count` prediction terms;
// undefined when count == 0 (nothing to predict).
struct LossResult {
  Tensor loss;
  size_t count = 0;
};

// Next-word prediction from block-internal context only, both directions.
// Predictions exist for t >= 2 (l2r) and t <= T-1 (r2l).
LossResult local_lm_loss(Graph& g, const LrHlstm& enc, const PredictionHead& head_l2r,
                         const PredictionHead& head_r2l, const EncodedDoc& doc);

// Hierarchical LM: the l2r term conditions on the previous token state and
// the previous block's global state (zero vectors at boundaries); mirrored
// for r2l. Every position is predicted.
LossResult global_hlm_loss(Graph& g, const LrHlstm& enc, const PredictionHead& head_l2r,
                           const PredictionHead& head_r2l, const EncodedDoc& doc);

// Masked prediction from the locally contextualized state h_t alone.
LossResult local_mlm_loss(Graph& g, const HierEncoder& enc, const PredictionHead& head,
                          const EncodedDoc& masked, const EncodedDoc& original,
                          const MaskSet& z);

// Masked prediction from [h_t; p_i] of the full hierarchy.
LossResult global_mlm_loss(Graph& g, const HierEncoder& enc, const PredictionHead& head,
                           const EncodedDoc& masked, const EncodedDoc& original,
                           const MaskSet& z);

struct PretrainModel {
  Config cfg;
  ParamStore store;
  std::unique_ptr<HierEncoder> bi;  // MLM objectives
  std::unique_ptr<LrHlstm> lr;     // LM objectives
  PredictionHead head_a, head_b;   // head_b used by the LM objectives (r2l)
};

// Builds encoder + heads for cfg.objective, enforcing the pairing rule.
// vocab_size 0 falls back to cfg.limits.vocab_size; pass the built
// vocabulary's size so head output dimensions match the actual id range.
PretrainModel build_pretrain_model(const Config& cfg, size_t vocab_size = 0);

// One document's objective value. Consumes mask_rng for MLM objectives.
LossResult pretrain_doc_loss(Graph& g, const PretrainModel& model, const Document& doc,
                             const Vocabulary& vocab, Rng& mask_rng);

struct PretrainResult {
  Checkpoint checkpoint;
  real last_epoch_mean = 0;
  uint64_t steps = 0;
  size_t empty_doc_warnings = 0;
};

// Full training loop: shuffled epochs, per-document Adam steps with gradient
// clipping, line-JSON loss log, periodic checkpoints, exact resume.
PretrainResult pretrain_run(const Config& cfg, const std::vector<Document>& corpus,
                            const Vocabulary& vocab, std::ostream* loss_log,
                            const std::string& checkpoint_path = "",
                            const Checkpoint* resume = nullptr);

// Vocabulary snapshot stored in checkpoint meta, for resumable runs.
Vocabulary vocab_from_checkpoint(const Checkpoint& cp);

}  // namespace docenc
