#pragma once

#include <span>
#include <string>
#include <vector>

#include "docenc/corpus.hpp"
#include "docenc/tensor.hpp"

namespace docenc {

struct EncoderConfig {
  size_t embed_dim = 32;  // char-CNN projection output, also block summary dim
  size_t local_hidden = 32;
  size_t global_hidden = 32;
  size_t local_layers = 2;
  size_t global_layers = 2;
  size_t char_embed = 16;
  std::vector<size_t> char_widths = {1, 2, 3};
  std::vector<size_t> char_filters = {16, 16, 16};

  void validate() const;
};

struct LstmLayerParams {
  Tensor w_ih;  // [4H x D], gate order i, f, g, o
  Tensor w_hh;  // [4H x H]
  Tensor b;     // [4H], forget-gate block initialized to 1
  size_t hidden = 0;
};

LstmLayerParams make_lstm_params(ParamStore& store, const std::string& prefix, size_t in_dim,
                                 size_t hidden, Rng& rng);

// One LSTM pass over a sequence of [d] vectors from zero initial state.
// reverse=false scans left to right. Output at t depends only on inputs
// <= t (forward) or >= t (backward).
std::vector<Tensor> lstm_run(Graph& g, std::span<const Tensor> seq, bool reverse,
                             const LstmLayerParams& p);

// Matrix-in, matrix-out wrapper around lstm_run.
Tensor lstm_layer(Graph& g, const Tensor& seq, bool reverse, const LstmLayerParams& p);

struct BiLayerParams {
  LstmLayerParams fwd, bwd;
};

// Stacked bidirectional layers: forward and backward passes concatenated per
// position feed the next layer. Returns every layer's outputs.
std::vector<std::vector<Tensor>> bilstm_stack(Graph& g, std::span<const Tensor> seq,
                                              std::span<const BiLayerParams> layers);

// concat(max-pool, avg-pool) -> linear -> tanh.
Tensor block_summary(Graph& g, std::span<const Tensor> h, const Tensor& w, const Tensor& b);

struct CharCnn {
  Tensor emb;  // [chars::kTableRows x char_embed]
  std::vector<Tensor> conv_w, conv_b;
  Tensor proj_w, proj_b;
  std::vector<size_t> widths;
  size_t max_width = 1;

  // chars -> convolutions per width -> max-over-time pooling -> projection.
  // Sequences shorter than the widest filter are padded with the pad symbol.
  Tensor embed(Graph& g, const std::vector<int>& char_ids) const;
};

CharCnn make_char_cnn(const EncoderConfig& cfg, ParamStore& store, const std::string& prefix,
                      Rng& rng);

// All intermediate representations of one document.
struct HierEncoding {
  std::vector<std::vector<Tensor>> h;       // [K][T_i] token states, top local layer
  std::vector<Tensor> c;                    // [K] block summaries
  std::vector<Tensor> p;                    // [K] document-contextual block states
  std::vector<std::vector<Tensor>> layers;  // [K][global_layers+1]; layer 0 = projected c_i
};

// Two-level hierarchical LSTM encoder. Mode bi is the bidirectional
// architecture; l2r/r2l are the uni-directional halves with every LSTM
// running in one direction.
class HierEncoder {
 public:
  enum class Mode { bi, l2r, r2l };

  HierEncoder(Mode mode, const EncoderConfig& cfg, ParamStore& store, const std::string& prefix,
              Rng& rng);

  HierEncoding encode(Graph& g, const EncodedDoc& doc) const;
  // Local level only: char-CNN + local LSTM stack, no pooling or global pass.
  std::vector<std::vector<Tensor>> encode_local(Graph& g, const EncodedDoc& doc) const;

  Mode mode() const { return mode_; }
  const EncoderConfig& config() const { return cfg_; }
  size_t local_out_dim() const { return (mode_ == Mode::bi ? 2 : 1) * cfg_.local_hidden; }
  size_t global_out_dim() const { return (mode_ == Mode::bi ? 2 : 1) * cfg_.global_hidden; }

 private:
  struct DirParams {
    LstmLayerParams fwd, bwd;  // bwd unused unless bi
  };
  Mode mode_;
  EncoderConfig cfg_;
  CharCnn char_cnn_;
  std::vector<DirParams> local_;
  std::vector<DirParams> global_;
  Tensor pool_w_, pool_b_;      // block summary FFNN
  Tensor layer0_w_, layer0_b_;  // c_i -> global-output-dim projection

  std::vector<std::vector<Tensor>> run_stack(Graph& g, std::span<const Tensor> seq,
                                             const std::vector<DirParams>& stack) const;
  Tensor block_summary(Graph& g, std::span<const Tensor> h) const;
};

// Concatenation of independent left-to-right and right-to-left hierarchies
// with separate parameters.
struct LrEncoding {
  HierEncoding l2r, r2l;
  std::vector<Tensor> p_hat;                // [K], concat of the two top states
  std::vector<std::vector<Tensor>> layers;  // [K][global_layers+1], per-layer concat
};

class LrHlstm {
 public:
  LrHlstm(const EncoderConfig& cfg, ParamStore& store, const std::string& prefix, Rng& rng);

  LrEncoding encode(Graph& g, const EncodedDoc& doc) const;

  const HierEncoder& left() const { return left_; }
  const HierEncoder& right() const { return right_; }
  size_t out_dim() const { return left_.global_out_dim() + right_.global_out_dim(); }

 private:
  HierEncoder left_, right_;
};

}  // namespace docenc
