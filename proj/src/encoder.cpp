#include "docenc/encoder.hpp"

#include <algorithm>

namespace docenc {

void EncoderConfig::validate() const {
  if (embed_dim == 0 || local_hidden == 0 || global_hidden == 0 || char_embed == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (local_layers == 0 || global_layers == 0)
    throw ConfigError("encoder layer counts must be at least 1");
  if (char_widths.empty() || char_widths.size() != char_filters.size())
    throw ConfigError("char filter widths and counts must be non-empty and aligned");
  for (size_t w : char_widths)
    if (w == 0) throw ConfigError("char filter width must be positive");
}

LstmLayerParams make_lstm_params(ParamStore& store, const std::string& prefix, size_t in_dim,
                                 size_t hidden, Rng& rng) {
  LstmLayerParams p;
  p.hidden = hidden;
  p.w_ih = store.add(prefix + ".W_ih", Tensor::fan_in_param({4 * hidden, in_dim}, rng));
  p.w_hh = store.add(prefix + ".W_hh", Tensor::fan_in_param({4 * hidden, hidden}, rng));
  Tensor b = Tensor::fan_in_param({4 * hidden}, rng);
  for (size_t i = hidden; i < 2 * hidden; ++i) b.value()[i] = 1;  // forget gate
  p.b = store.add(prefix + ".b", b);
  return p;
}

std::vector<Tensor> lstm_run(Graph& g, std::span<const Tensor> seq, bool reverse,
                             const LstmLayerParams& p) {
  if (seq.empty()) throw DimError("lstm_run: empty sequence");
  const size_t h_dim = p.hidden;
  if (p.w_ih.dim(1) != seq[0].numel())
    throw DimError("lstm_run: input dim " + std::to_string(seq[0].numel()) +
                   " does not match W_ih " + shape_str(p.w_ih.shape()));
  Tensor h = Tensor::zeros({h_dim});
  Tensor c = Tensor::zeros({h_dim});
  std::vector<Tensor> out(seq.size());
  for (size_t step = 0; step < seq.size(); ++step) {
    const size_t t = reverse ? seq.size() - 1 - step : step;
    Tensor gates = g.add(g.add(g.matvec(p.w_ih, seq[t]), g.matvec(p.w_hh, h)), p.b);
    Tensor in_g = g.sigmoid(g.slice(gates, 0, h_dim));
    Tensor forget_g = g.sigmoid(g.slice(gates, h_dim, h_dim));
    Tensor cand = g.tanh(g.slice(gates, 2 * h_dim, h_dim));
    Tensor out_g = g.sigmoid(g.slice(gates, 3 * h_dim, h_dim));
    c = g.add(g.mul(forget_g, c), g.mul(in_g, cand));
    h = g.mul(out_g, g.tanh(c));
    out[t] = h;
  }
  return out;
}

Tensor lstm_layer(Graph& g, const Tensor& seq, bool reverse, const LstmLayerParams& p) {
  if (seq.rank() != 2) throw DimError("lstm_layer: want [T x d] input");
  std::vector<Tensor> rows;
  rows.reserve(seq.dim(0));
  for (size_t t = 0; t < seq.dim(0); ++t) rows.push_back(g.row(seq, t));
  auto out = lstm_run(g, rows, reverse, p);
  return g.stack_rows(out);
}

std::vector<std::vector<Tensor>> bilstm_stack(Graph& g, std::span<const Tensor> seq,
                                              std::span<const BiLayerParams> layers) {
  std::vector<std::vector<Tensor>> per_layer;
  std::vector<Tensor> cur(seq.begin(), seq.end());
  for (const BiLayerParams& lp : layers) {
    auto f = lstm_run(g, cur, false, lp.fwd);
    auto b = lstm_run(g, cur, true, lp.bwd);
    std::vector<Tensor> next;
    next.reserve(cur.size());
    for (size_t t = 0; t < cur.size(); ++t) next.push_back(g.concat({f[t], b[t]}, 0));
    per_layer.push_back(next);
    cur = std::move(next);
  }
  return per_layer;
}

Tensor block_summary(Graph& g, std::span<const Tensor> h, const Tensor& w, const Tensor& b) {
  Tensor m = g.stack_rows(h);
  Tensor pooled = g.concat({g.pool_max(m), g.pool_avg(m)}, 0);
  return g.tanh(g.linear(pooled, w, b));
}

Tensor CharCnn::embed(Graph& g, const std::vector<int>& char_ids) const {
  if (char_ids.empty()) throw DimError("char_cnn: empty character sequence");
  std::vector<int> ids = char_ids;
  while (ids.size() < max_width) ids.push_back(chars::kPadChar);
  Tensor seq = g.gather_rows(emb, ids);
  std::vector<Tensor> pooled;
  pooled.reserve(widths.size());
  for (size_t w = 0; w < widths.size(); ++w)
    pooled.push_back(g.pool_max(g.conv1d(seq, conv_w[w], conv_b[w], widths[w])));
  Tensor feat = pooled.size() == 1 ? pooled[0] : g.concat(pooled, 0);
  return g.linear(feat, proj_w, proj_b);
}

CharCnn make_char_cnn(const EncoderConfig& cfg, ParamStore& store, const std::string& prefix,
                      Rng& rng) {
  CharCnn cc;
  cc.widths = cfg.char_widths;
  cc.max_width = *std::max_element(cfg.char_widths.begin(), cfg.char_widths.end());
  cc.emb = store.add(prefix + ".emb",
                     Tensor::fan_in_param({static_cast<size_t>(chars::kTableRows), cfg.char_embed}, rng));
  size_t total_filters = 0;
  for (size_t i = 0; i < cfg.char_widths.size(); ++i) {
    const size_t w = cfg.char_widths[i], f = cfg.char_filters[i];
    cc.conv_w.push_back(store.add(prefix + ".conv" + std::to_string(w) + ".W",
                                  Tensor::fan_in_param({f, w * cfg.char_embed}, rng)));
    cc.conv_b.push_back(
        store.add(prefix + ".conv" + std::to_string(w) + ".b", Tensor::fan_in_param({f}, rng)));
    total_filters += f;
  }
  cc.proj_w =
      store.add(prefix + ".proj.W", Tensor::fan_in_param({cfg.embed_dim, total_filters}, rng));
  cc.proj_b = store.add(prefix + ".proj.b", Tensor::fan_in_param({cfg.embed_dim}, rng));
  return cc;
}

HierEncoder::HierEncoder(Mode mode, const EncoderConfig& cfg, ParamStore& store,
                         const std::string& prefix, Rng& rng)
    : mode_(mode), cfg_(cfg) {
  cfg_.validate();
  char_cnn_ = make_char_cnn(cfg_, store, prefix + ".char", rng);
  const bool bi = mode_ == Mode::bi;
  size_t in_dim = cfg_.embed_dim;
  for (size_t l = 0; l < cfg_.local_layers; ++l) {
    DirParams dp;
    const std::string lp = prefix + ".local.L" + std::to_string(l);
    if (bi) {
      dp.fwd = make_lstm_params(store, lp + ".fwd", in_dim, cfg_.local_hidden, rng);
      dp.bwd = make_lstm_params(store, lp + ".bwd", in_dim, cfg_.local_hidden, rng);
      in_dim = 2 * cfg_.local_hidden;
    } else {
      dp.fwd = make_lstm_params(store, lp, in_dim, cfg_.local_hidden, rng);
      in_dim = cfg_.local_hidden;
    }
    local_.push_back(std::move(dp));
  }
  // Block summary FFNN over [max-pool; avg-pool].
  pool_w_ = store.add(prefix + ".pool.W", Tensor::fan_in_param({cfg_.embed_dim, 2 * in_dim}, rng));
  pool_b_ = store.add(prefix + ".pool.b", Tensor::fan_in_param({cfg_.embed_dim}, rng));

  layer0_w_ = store.add(prefix + ".layer0.W",
                        Tensor::fan_in_param({global_out_dim(), cfg_.embed_dim}, rng));
  layer0_b_ = store.add(prefix + ".layer0.b", Tensor::fan_in_param({global_out_dim()}, rng));

  in_dim = cfg_.embed_dim;
  for (size_t l = 0; l < cfg_.global_layers; ++l) {
    DirParams dp;
    const std::string gp = prefix + ".global.L" + std::to_string(l);
    if (bi) {
      dp.fwd = make_lstm_params(store, gp + ".fwd", in_dim, cfg_.global_hidden, rng);
      dp.bwd = make_lstm_params(store, gp + ".bwd", in_dim, cfg_.global_hidden, rng);
      in_dim = 2 * cfg_.global_hidden;
    } else {
      dp.fwd = make_lstm_params(store, gp, in_dim, cfg_.global_hidden, rng);
      in_dim = cfg_.global_hidden;
    }
    global_.push_back(std::move(dp));
  }
}

std::vector<std::vector<Tensor>> HierEncoder::run_stack(
    Graph& g, std::span<const Tensor> seq, const std::vector<DirParams>& stack) const {
  std::vector<std::vector<Tensor>> per_layer;
  std::vector<Tensor> cur(seq.begin(), seq.end());
  for (const DirParams& dp : stack) {
    std::vector<Tensor> next;
    if (mode_ == Mode::bi) {
      auto f = lstm_run(g, cur, false, dp.fwd);
      auto b = lstm_run(g, cur, true, dp.bwd);
      next.reserve(cur.size());
      for (size_t t = 0; t < cur.size(); ++t) next.push_back(g.concat({f[t], b[t]}, 0));
    } else {
      next = lstm_run(g, cur, mode_ == Mode::r2l, dp.fwd);
    }
    per_layer.push_back(next);
    cur = std::move(next);
  }
  return per_layer;
}

Tensor HierEncoder::block_summary(Graph& g, std::span<const Tensor> h) const {
  return docenc::block_summary(g, h, pool_w_, pool_b_);
}

std::vector<std::vector<Tensor>> HierEncoder::encode_local(Graph& g,
                                                           const EncodedDoc& doc) const {
  if (doc.blocks.empty()) throw DimError("encode: document has no blocks");
  std::vector<std::vector<Tensor>> h;
  h.reserve(doc.blocks.size());
  for (const auto& block : doc.blocks) {
    if (block.size() == 0) throw DimError("encode: empty block");
    std::vector<Tensor> x;
    x.reserve(block.size());
    for (const auto& cs : block.char_ids) x.push_back(char_cnn_.embed(g, cs));
    auto layers = run_stack(g, x, local_);
    h.push_back(std::move(layers.back()));
  }
  return h;
}

HierEncoding HierEncoder::encode(Graph& g, const EncodedDoc& doc) const {
  HierEncoding enc;
  enc.h = encode_local(g, doc);
  const size_t k = doc.blocks.size();
  enc.c.reserve(k);
  for (size_t i = 0; i < k; ++i) enc.c.push_back(block_summary(g, enc.h[i]));

  auto global_layers = run_stack(g, enc.c, global_);
  enc.p = global_layers.back();

  enc.layers.resize(k);
  for (size_t i = 0; i < k; ++i) {
    enc.layers[i].reserve(global_.size() + 1);
    enc.layers[i].push_back(g.linear(enc.c[i], layer0_w_, layer0_b_));
    for (const auto& layer : global_layers) enc.layers[i].push_back(layer[i]);
  }
  return enc;
}

LrHlstm::LrHlstm(const EncoderConfig& cfg, ParamStore& store, const std::string& prefix,
                 Rng& rng)
    : left_(HierEncoder::Mode::l2r, cfg, store, prefix + ".l2r", rng),
      right_(HierEncoder::Mode::r2l, cfg, store, prefix + ".r2l", rng) {}

LrEncoding LrHlstm::encode(Graph& g, const EncodedDoc& doc) const {
  LrEncoding enc;
  enc.l2r = left_.encode(g, doc);
  enc.r2l = right_.encode(g, doc);
  const size_t k = doc.blocks.size();
  enc.p_hat.reserve(k);
  enc.layers.resize(k);
  for (size_t i = 0; i < k; ++i) {
    enc.p_hat.push_back(g.concat({enc.l2r.p[i], enc.r2l.p[i]}, 0));
    enc.layers[i].reserve(enc.l2r.layers[i].size());
    for (size_t l = 0; l < enc.l2r.layers[i].size(); ++l)
      enc.layers[i].push_back(g.concat({enc.l2r.layers[i][l], enc.r2l.layers[i][l]}, 0));
  }
  return enc;
}

}  // namespace docenc
