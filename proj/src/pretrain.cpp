#include "docenc/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace docenc {

bool MaskSet::contains(size_t block, size_t token) const {
  return std::binary_search(positions.begin(), positions.end(), std::make_pair(block, token));
}

MaskSet sample_mask(const Document& doc, real rate, Rng& rng) {
  if (rate <= 0 || rate > 1) throw ConfigError("mask rate must be in (0, 1]");
  MaskSet z;
  z.rate = rate;
  if (doc.total_tokens() == 0) return z;
  // Resample while empty; a non-empty document must yield at least one mask.
  for (int attempt = 0; attempt < 64 && z.positions.empty(); ++attempt) {
    for (size_t i = 0; i < doc.blocks.size(); ++i)
      for (size_t t = 0; t < doc.blocks[i].tokens.size(); ++t)
        if (rng.bernoulli(rate)) z.positions.emplace_back(i, t);
  }
  if (z.positions.empty()) z.positions.emplace_back(0, 0);
  return z;
}

MaskedDocument apply_mask(const Document& doc, const MaskSet& z) {
  for (const auto& [i, t] : z.positions)
    if (i >= doc.blocks.size() || t >= doc.blocks[i].tokens.size())
      throw DataError("mask position (" + std::to_string(i) + ", " + std::to_string(t) +
                      ") out of range for document " + doc.id);
  MaskedDocument out = doc;
  for (const auto& [i, t] : z.positions) out.blocks[i].tokens[t] = kMaskToken;
  return out;
}

PredictionHead make_head(ParamStore& store, const std::string& prefix, size_t in_dim,
                         size_t hidden, size_t vocab, Rng& rng) {
  PredictionHead h;
  h.w1 = store.add(prefix + ".fc1.W", Tensor::fan_in_param({hidden, in_dim}, rng));
  h.b1 = store.add(prefix + ".fc1.b", Tensor::fan_in_param({hidden}, rng));
  h.w2 = store.add(prefix + ".fc2.W", Tensor::fan_in_param({vocab, hidden}, rng));
  h.b2 = store.add(prefix + ".fc2.b", Tensor::fan_in_param({vocab}, rng));
  return h;
}

Tensor PredictionHead::logits(Graph& g, const Tensor& ctx) const {
  return g.linear(g.tanh(g.linear(ctx, w1, b1)), w2, b2);
}

Tensor PredictionHead::logits(Graph& g, const Tensor& a, const Tensor& b) const {
  return logits(g, g.concat({a, b}, 0));
}

namespace {

LossResult finish(Graph& g, std::vector<Tensor>& terms) {
  LossResult r;
  r.count = terms.size();
  if (terms.empty()) return r;
  r.loss = g.scale(g.vsum(terms), real(1) / static_cast<real>(terms.size()));
  return r;
}

}  // namespace

LossResult local_lm_loss(Graph& g, const LrHlstm& enc, const PredictionHead& head_l2r,
                         const PredictionHead& head_r2l, const EncodedDoc& doc) {
  std::vector<Tensor> terms;
  auto h_l2r = enc.left().encode_local(g, doc);
  auto h_r2l = enc.right().encode_local(g, doc);
  for (size_t i = 0; i < doc.blocks.size(); ++i) {
    const auto& ids = doc.blocks[i].token_ids;
    for (size_t t = 1; t < ids.size(); ++t)
      terms.push_back(g.softmax_xent(head_l2r.logits(g, h_l2r[i][t - 1]),
                                     static_cast<size_t>(ids[t])));
    for (size_t t = 0; t + 1 < ids.size(); ++t)
      terms.push_back(g.softmax_xent(head_r2l.logits(g, h_r2l[i][t + 1]),
                                     static_cast<size_t>(ids[t])));
  }
  return finish(g, terms);
}

LossResult global_hlm_loss(Graph& g, const LrHlstm& enc, const PredictionHead& head_l2r,
                           const PredictionHead& head_r2l, const EncodedDoc& doc) {
  std::vector<Tensor> terms;
  HierEncoding l2r = enc.left().encode(g, doc);
  HierEncoding r2l = enc.right().encode(g, doc);
  const size_t k = doc.blocks.size();
  Tensor zero_h_l = Tensor::zeros({enc.left().local_out_dim()});
  Tensor zero_p_l = Tensor::zeros({enc.left().global_out_dim()});
  Tensor zero_h_r = Tensor::zeros({enc.right().local_out_dim()});
  Tensor zero_p_r = Tensor::zeros({enc.right().global_out_dim()});
  for (size_t i = 0; i < k; ++i) {
    const auto& ids = doc.blocks[i].token_ids;
    const size_t t_len = ids.size();
    for (size_t t = 0; t < t_len; ++t) {
      // l2r: previous token state within the block, previous block's summary.
      Tensor ctx_h = t > 0 ? l2r.h[i][t - 1] : zero_h_l;
      Tensor ctx_p = i > 0 ? l2r.p[i - 1] : zero_p_l;
      terms.push_back(g.softmax_xent(head_l2r.logits(g, ctx_h, ctx_p),
                                     static_cast<size_t>(ids[t])));
      // r2l mirror: next token state, next block's summary.
      Tensor ctx_h_r = t + 1 < t_len ? r2l.h[i][t + 1] : zero_h_r;
      Tensor ctx_p_r = i + 1 < k ? r2l.p[i + 1] : zero_p_r;
      terms.push_back(g.softmax_xent(head_r2l.logits(g, ctx_h_r, ctx_p_r),
                                     static_cast<size_t>(ids[t])));
    }
  }
  return finish(g, terms);
}

namespace {

LossResult mlm_loss_impl(Graph& g, const HierEncoder& enc, const PredictionHead& head,
                         const EncodedDoc& masked, const EncodedDoc& original, const MaskSet& z,
                         bool global) {
  if (z.positions.empty()) throw DataError("mlm loss: empty mask set");
  if (masked.blocks.size() != original.blocks.size())
    throw DataError("mlm loss: masked/original block count mismatch");
  HierEncoding full;
  std::vector<std::vector<Tensor>> h;
  if (global) {
    full = enc.encode(g, masked);
    h = full.h;
  } else {
    h = enc.encode_local(g, masked);
  }
  std::vector<Tensor> terms;
  terms.reserve(z.positions.size());
  for (const auto& [i, t] : z.positions) {
    if (i >= original.blocks.size() || t >= original.blocks[i].size())
      throw DataError("mlm loss: mask position out of range");
    const auto target = static_cast<size_t>(original.blocks[i].token_ids[t]);
    Tensor logits = global ? head.logits(g, h[i][t], full.p[i]) : head.logits(g, h[i][t]);
    terms.push_back(g.softmax_xent(logits, target));
  }
  return finish(g, terms);
}

}  // namespace

LossResult local_mlm_loss(Graph& g, const HierEncoder& enc, const PredictionHead& head,
                          const EncodedDoc& masked, const EncodedDoc& original,
                          const MaskSet& z) {
  return mlm_loss_impl(g, enc, head, masked, original, z, false);
}

LossResult global_mlm_loss(Graph& g, const HierEncoder& enc, const PredictionHead& head,
                           const EncodedDoc& masked, const EncodedDoc& original,
                           const MaskSet& z) {
  return mlm_loss_impl(g, enc, head, masked, original, z, true);
}

PretrainModel build_pretrain_model(const Config& cfg, size_t vocab_size) {
  check_pairing(cfg.objective, cfg.arch);
  PretrainModel m;
  m.cfg = cfg;
  Rng rng(cfg.seed);
  const size_t v = vocab_size ? vocab_size : cfg.limits.vocab_size;
  if (is_mlm(cfg.objective)) {
    m.bi = std::make_unique<HierEncoder>(HierEncoder::Mode::bi, cfg.encoder, m.store, "enc.bi",
                                         rng);
    if (cfg.objective == Objective::local_mlm) {
      m.head_a = make_head(m.store, "head.local_mlm", m.bi->local_out_dim(), cfg.head_hidden, v,
                           rng);
    } else {
      m.head_a = make_head(m.store, "head.g_mlm", m.bi->local_out_dim() + m.bi->global_out_dim(),
                           cfg.head_hidden, v, rng);
    }
  } else {
    m.lr = std::make_unique<LrHlstm>(cfg.encoder, m.store, "enc", rng);
    if (cfg.objective == Objective::local_lm) {
      m.head_a = make_head(m.store, "head.local_lm.l2r", m.lr->left().local_out_dim(),
                           cfg.head_hidden, v, rng);
      m.head_b = make_head(m.store, "head.local_lm.r2l", m.lr->right().local_out_dim(),
                           cfg.head_hidden, v, rng);
    } else {
      m.head_a = make_head(m.store, "head.g_lm.l2r",
                           m.lr->left().local_out_dim() + m.lr->left().global_out_dim(),
                           cfg.head_hidden, v, rng);
      m.head_b = make_head(m.store, "head.g_lm.r2l",
                           m.lr->right().local_out_dim() + m.lr->right().global_out_dim(),
                           cfg.head_hidden, v, rng);
    }
  }
  return m;
}

LossResult pretrain_doc_loss(Graph& g, const PretrainModel& model, const Document& doc,
                             const Vocabulary& vocab, Rng& mask_rng) {
  if (is_mlm(model.cfg.objective)) {
    MaskSet z = sample_mask(doc, model.cfg.limits.mask_rate, mask_rng);
    MaskedDocument masked = apply_mask(doc, z);
    EncodedDoc enc_masked = encode_ids(masked, vocab);
    EncodedDoc enc_orig = encode_ids(doc, vocab);
    if (model.cfg.objective == Objective::local_mlm)
      return local_mlm_loss(g, *model.bi, model.head_a, enc_masked, enc_orig, z);
    return global_mlm_loss(g, *model.bi, model.head_a, enc_masked, enc_orig, z);
  }
  EncodedDoc enc = encode_ids(doc, vocab);
  if (model.cfg.objective == Objective::local_lm)
    return local_lm_loss(g, *model.lr, model.head_a, model.head_b, enc);
  return global_hlm_loss(g, *model.lr, model.head_a, model.head_b, enc);
}

namespace {

std::string fmt_real(real v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
  return buf;
}

// Epoch-local document order, derived from (seed, epoch) so a resumed run
// can reproduce it without replaying the mask RNG.
std::vector<size_t> epoch_order(uint64_t seed, size_t epoch, size_t n) {
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  return order;
}

}  // namespace

Vocabulary vocab_from_checkpoint(const Checkpoint& cp) {
  auto it = cp.meta.find("vocab");
  if (it == cp.meta.end()) throw IncompatError("checkpoint carries no vocabulary snapshot");
  return Vocabulary::from_lines(it->second);
}

PretrainResult pretrain_run(const Config& cfg, const std::vector<Document>& corpus,
                            const Vocabulary& vocab, std::ostream* loss_log,
                            const std::string& checkpoint_path, const Checkpoint* resume) {
  if (corpus.empty()) throw DataError("pretrain: empty corpus");
  PretrainModel model = build_pretrain_model(cfg, vocab.size());
  Adam opt(model.store, cfg.optim);
  Rng mask_rng(cfg.seed ^ 0x517cc1b727220a95ULL);

  std::vector<Document> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus)
    docs.push_back(truncate(d, cfg.limits.max_blocks, cfg.limits.max_tokens_per_block,
                            cfg.limits.max_total_tokens));

  uint64_t step = 0;
  size_t epoch0 = 0, doc0 = 0;
  real epoch_sum = 0;
  uint64_t epoch_count = 0;
  if (resume) {
    resume->restore_into(model.store);
    resume->restore_optimizer(opt);
    auto rs = resume->meta.find("mask_rng");
    if (rs != resume->meta.end()) mask_rng.restore(rs->second);
    step = resume->meta_u64("step");
    epoch0 = resume->meta_u64("epoch");
    doc0 = resume->meta_u64("doc_idx");
    epoch_count = resume->meta_u64("epoch_count");
    auto es = resume->meta.find("epoch_sum");
    if (es != resume->meta.end()) epoch_sum = static_cast<real>(std::stod(es->second));
  }

  PretrainResult res;
  auto snapshot = [&](size_t epoch, size_t next_doc) {
    Checkpoint cp = Checkpoint::capture(model.store, cfg.to_json_text(), &opt);
    cp.meta["step"] = std::to_string(step);
    cp.meta["epoch"] = std::to_string(epoch);
    cp.meta["doc_idx"] = std::to_string(next_doc);
    cp.meta["mask_rng"] = mask_rng.state();
    cp.meta["epoch_sum"] = fmt_real(epoch_sum);
    cp.meta["epoch_count"] = std::to_string(epoch_count);
    cp.meta["vocab"] = vocab.to_lines();
    return cp;
  };

  bool done = false;
  for (size_t epoch = epoch0; epoch < cfg.run.epochs && !done; ++epoch) {
    auto order = epoch_order(cfg.seed, epoch, docs.size());
    size_t start = epoch == epoch0 ? doc0 : 0;
    if (start == 0) {
      epoch_sum = 0;
      epoch_count = 0;
    }
    for (size_t d = start; d < order.size(); ++d) {
      Graph g;
      LossResult lr = pretrain_doc_loss(g, model, docs[order[d]], vocab, mask_rng);
      ++step;
      real loss_v = 0;
      if (lr.count == 0) {
        ++res.empty_doc_warnings;
      } else {
        loss_v = lr.loss.item();
        model.store.zero_grad();
        g.backward(lr.loss);
        clip_grad_norm(model.store, cfg.run.clip_norm);
        opt.step();
        epoch_sum += loss_v;
        ++epoch_count;
      }
      if (loss_log) {
        const real mean = epoch_count ? epoch_sum / static_cast<real>(epoch_count) : 0;
        (*loss_log) << "{\"step\":" << step << ",\"epoch\":" << epoch
                    << ",\"loss\":" << fmt_real(loss_v) << ",\"mean_loss\":" << fmt_real(mean)
                    << "}\n";
      }
      const bool at_cap = cfg.run.max_steps > 0 && step >= cfg.run.max_steps;
      if (!checkpoint_path.empty() && cfg.run.checkpoint_every > 0 &&
          (step % cfg.run.checkpoint_every == 0 || at_cap)) {
        const bool epoch_end = d + 1 == order.size();
        snapshot(epoch_end ? epoch + 1 : epoch, epoch_end ? 0 : d + 1).save(checkpoint_path);
      }
      if (at_cap) {
        done = true;
        const bool epoch_end = d + 1 == order.size();
        res.checkpoint = snapshot(epoch_end ? epoch + 1 : epoch, epoch_end ? 0 : d + 1);
        break;
      }
    }
  }
  if (!done) res.checkpoint = snapshot(cfg.run.epochs, 0);
  if (!checkpoint_path.empty()) res.checkpoint.save(checkpoint_path);
  res.last_epoch_mean = epoch_count ? epoch_sum / static_cast<real>(epoch_count) : 0;
  res.steps = step;
  return res;
}

}  // namespace docenc
