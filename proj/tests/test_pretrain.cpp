#include <doctest.h>

#include <cmath>
#include <sstream>

#include "docenc/pretrain.hpp"
#include "docenc/synth.hpp"
#include "fd_check.hpp"

using namespace docenc;

namespace {

Config tiny_cfg(Objective obj) {
  Config c = Config::desk();
  c.objective = obj;
  c.arch = is_mlm(obj) ? Arch::bi_hlstm : Arch::lr_hlstm;
  c.encoder.embed_dim = 6;
  c.encoder.local_hidden = 5;
  c.encoder.global_hidden = 4;
  c.encoder.local_layers = 1;
  c.encoder.global_layers = 1;
  c.encoder.char_embed = 4;
  c.encoder.char_widths = {1, 2};
  c.encoder.char_filters = {3, 3};
  c.head_hidden = 6;
  c.limits.vocab_size = 40;
  c.seed = 5;
  return c;
}

Document words_doc(std::vector<std::vector<std::string>> blocks) {
  Document d;
  d.id = "d";
  for (auto& b : blocks) d.blocks.push_back(TextBlock{std::move(b)});
  return d;
}

Vocabulary small_vocab() {
  std::vector<Document> docs = {
      words_doc({{"aa", "bb", "cc", "dd", "ee", "ff", "gg", "hh"}})};
  return Vocabulary::build(docs, 40);
}

}  // namespace

TEST_CASE("sample_mask rate one masks everything") {
  Rng rng(1);
  Document d = words_doc({{"aa", "bb"}, {"cc"}});
  MaskSet z = sample_mask(d, 1.0, rng);
  CHECK(z.positions.size() == 3);
  CHECK(z.contains(0, 0));
  CHECK(z.contains(1, 0));
}

TEST_CASE("sample_mask binomial bound at rate 0.2") {
  Rng rng(2);
  std::vector<std::string> toks(100, "w");
  std::vector<std::vector<std::string>> blocks(100, toks);  // 10000 tokens
  Document d = words_doc(std::move(blocks));
  MaskSet z = sample_mask(d, 0.2, rng);
  CHECK(z.positions.size() >= 1800);
  CHECK(z.positions.size() <= 2200);
}

TEST_CASE("sample_mask determinism and guards") {
  Document d = words_doc({{"aa", "bb", "cc"}});
  Rng r1(7), r2(7);
  CHECK(sample_mask(d, 0.3, r1).positions == sample_mask(d, 0.3, r2).positions);
  Rng r3(8);
  CHECK_THROWS_AS(sample_mask(d, 0.0, r3), ConfigError);
  CHECK_THROWS_AS(sample_mask(d, 1.5, r3), ConfigError);
  // Non-empty document always yields at least one mask.
  Document one = words_doc({{"aa"}});
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng r(seed);
    CHECK(sample_mask(one, 0.01, r).positions.size() >= 1);
  }
}

TEST_CASE("apply_mask examples") {
  Document d = words_doc({{"aa", "bb"}, {"cc"}});
  SUBCASE("empty Z is the identity") {
    MaskSet z;
    Document m = apply_mask(d, z);
    CHECK(m.blocks[0].tokens == d.blocks[0].tokens);
  }
  SUBCASE("total masking") {
    MaskSet z;
    z.positions = {{0, 0}, {0, 1}, {1, 0}};
    Document m = apply_mask(d, z);
    for (const auto& b : m.blocks)
      for (const auto& t : b.tokens) CHECK(t == kMaskToken);
    CHECK(d.blocks[0].tokens[0] == "aa");  // source untouched
  }
  SUBCASE("masked position hides the original token") {
    MaskSet z;
    z.positions = {{0, 1}};
    Document d2 = d;
    d2.blocks[0].tokens[1] = "zz";
    Document m1 = apply_mask(d, z);
    Document m2 = apply_mask(d2, z);
    CHECK(m1.blocks[0].tokens == m2.blocks[0].tokens);
    CHECK(m1.blocks[1].tokens == m2.blocks[1].tokens);
  }
  SUBCASE("out-of-range mask position") {
    MaskSet z;
    z.positions = {{5, 0}};
    CHECK_THROWS_AS(apply_mask(d, z), DataError);
  }
}

TEST_CASE("local lm loss boundary conventions") {
  Config cfg = tiny_cfg(Objective::local_lm);
  PretrainModel m = build_pretrain_model(cfg);
  Vocabulary v = small_vocab();
  SUBCASE("single-token blocks yield no predictions") {
    Graph g;
    EncodedDoc doc = encode_ids(words_doc({{"aa"}, {"bb"}}), v);
    LossResult r = local_lm_loss(g, *m.lr, m.head_a, m.head_b, doc);
    CHECK(r.count == 0);
  }
  SUBCASE("two-token block yields one prediction per direction") {
    Graph g;
    EncodedDoc doc = encode_ids(words_doc({{"aa", "bb"}}), v);
    LossResult r = local_lm_loss(g, *m.lr, m.head_a, m.head_b, doc);
    CHECK(r.count == 2);
  }
}

TEST_CASE("untrained lm losses sit near the uniform baseline") {
  Vocabulary v = small_vocab();
  const real ln_v = std::log(static_cast<real>(v.size()));
  Rng mask_rng(3);
  auto docs = synth::random_text(6, 17, 30);
  for (Objective obj : {Objective::local_lm, Objective::g_lm, Objective::local_mlm,
                        Objective::g_mlm}) {
    Config cfg = tiny_cfg(obj);
    cfg.limits.vocab_size = v.size();
    PretrainModel m = build_pretrain_model(cfg);
    real total = 0;
    size_t n = 0;
    for (const auto& d : docs) {
      Graph g;
      LossResult r = pretrain_doc_loss(g, m, d, v, mask_rng);
      if (r.count == 0) continue;
      total += r.loss.item() * static_cast<real>(r.count);
      n += r.count;
    }
    const real mean = total / static_cast<real>(n);
    CHECK(mean == doctest::Approx(ln_v).epsilon(0.10));
  }
}

TEST_CASE("global hlm loss handles a single-block document") {
  Config cfg = tiny_cfg(Objective::g_lm);
  PretrainModel m = build_pretrain_model(cfg);
  Vocabulary v = small_vocab();
  Graph g;
  EncodedDoc doc = encode_ids(words_doc({{"aa", "bb", "cc"}}), v);
  LossResult r = global_hlm_loss(g, *m.lr, m.head_a, m.head_b, doc);
  CHECK(r.count == 6);  // every position, both directions
  CHECK(std::isfinite(r.loss.item()));
}

TEST_CASE("global hlm gradient reaches the global lstm") {
  Config cfg = tiny_cfg(Objective::g_lm);
  PretrainModel m = build_pretrain_model(cfg);
  Vocabulary v = small_vocab();
  Graph g;
  EncodedDoc doc = encode_ids(words_doc({{"aa", "bb"}, {"cc", "dd"}}), v);
  LossResult r = global_hlm_loss(g, *m.lr, m.head_a, m.head_b, doc);
  m.store.zero_grad();
  g.backward(r.loss);
  bool nonzero = false;
  for (const auto& [name, t] : m.store.items()) {
    if (name.find(".global.") == std::string::npos) continue;
    if (!t.has_grad()) continue;
    for (real gv : t.grad())
      if (gv != 0) nonzero = true;
  }
  CHECK(nonzero);
}

TEST_CASE("global hlm loss matches finite differences") {
  Config cfg = tiny_cfg(Objective::g_lm);
  PretrainModel m = build_pretrain_model(cfg);
  // Spread parameters away from near-ties in the pooling layers.
  Rng spread(31);
  for (const auto& [name, t] : m.store.items()) {
    Tensor h = t;
    for (real& val : h.value()) val = spread.uniform(-0.7, 0.7);
  }
  Vocabulary v = small_vocab();
  EncodedDoc doc = encode_ids(words_doc({{"aa", "bb", "cc"}, {"dd", "ee", "ff"}}), v);
  auto loss_fn = [&](Graph& g) {
    return global_hlm_loss(g, *m.lr, m.head_a, m.head_b, doc).loss;
  };
  m.store.zero_grad();
  Graph g;
  g.backward(loss_fn(g));
  Rng pick(32);
  for (const auto& [name, t] : m.store.items()) {
    auto rep = fdcheck::check_param(loss_fn, t, fdcheck::sample_elems(t, 3, pick));
    CHECK_MESSAGE(rep.failures == 0, name);
  }
}

TEST_CASE("local mlm: masked logits cannot see the hidden token") {
  Config cfg = tiny_cfg(Objective::local_mlm);
  PretrainModel m = build_pretrain_model(cfg);
  Vocabulary v = small_vocab();
  Document a = words_doc({{"aa", "bb", "cc"}});
  Document b = a;
  b.blocks[0].tokens[1] = "ee";
  MaskSet z;
  z.positions = {{0, 1}};
  z.rate = 0.2;
  // The masked documents are identical, so the whole forward pass is too.
  Document ma = apply_mask(a, z), mb = apply_mask(b, z);
  CHECK(ma.blocks[0].tokens == mb.blocks[0].tokens);
  Graph g;
  auto ha = m.bi->encode_local(g, encode_ids(ma, v));
  auto hb = m.bi->encode_local(g, encode_ids(mb, v));
  Tensor la = m.head_a.logits(g, ha[0][1]);
  Tensor lb = m.head_a.logits(g, hb[0][1]);
  CHECK(la.value() == lb.value());
}

TEST_CASE("local mlm sends no gradient to the global lstm") {
  Config cfg = tiny_cfg(Objective::local_mlm);
  PretrainModel m = build_pretrain_model(cfg);
  Vocabulary v = small_vocab();
  Document d = words_doc({{"aa", "bb", "cc"}, {"dd", "ee"}});
  MaskSet z;
  z.positions = {{0, 0}, {1, 1}};
  Graph g;
  LossResult r = local_mlm_loss(g, *m.bi, m.head_a, encode_ids(apply_mask(d, z), v),
                                encode_ids(d, v), z);
  m.store.zero_grad();
  g.backward(r.loss);
  for (const auto& [name, t] : m.store.items()) {
    const bool global_side = name.find(".global.") != std::string::npos ||
                             name.find(".pool.") != std::string::npos ||
                             name.find(".layer0.") != std::string::npos;
    if (!global_side) continue;
    if (!t.has_grad()) continue;
    for (real gv : t.grad()) CHECK(gv == 0);
  }
  // And the local side does receive gradient.
  bool local_nonzero = false;
  for (const auto& [name, t] : m.store.items()) {
    if (name.find(".local.") == std::string::npos || !t.has_grad()) continue;
    for (real gv : t.grad())
      if (gv != 0) local_nonzero = true;
  }
  CHECK(local_nonzero);
}

TEST_CASE("global mlm: singleton mask reduces to one cross entropy") {
  Config cfg = tiny_cfg(Objective::g_mlm);
  PretrainModel m = build_pretrain_model(cfg);
  Vocabulary v = small_vocab();
  Document d = words_doc({{"aa", "bb"}, {"cc", "dd"}});
  MaskSet z;
  z.positions = {{1, 0}};
  EncodedDoc masked = encode_ids(apply_mask(d, z), v);
  EncodedDoc orig = encode_ids(d, v);
  Graph g;
  LossResult r = global_mlm_loss(g, *m.bi, m.head_a, masked, orig, z);
  CHECK(r.count == 1);

  Graph g2;
  HierEncoding e = m.bi->encode(g2, masked);
  Tensor logits = m.head_a.logits(g2, e.h[1][0], e.p[1]);
  Tensor expect = g2.softmax_xent(logits, static_cast<size_t>(orig.blocks[1].token_ids[0]));
  CHECK(r.loss.item() == doctest::Approx(expect.item()).epsilon(1e-12));
}

TEST_CASE("global mlm gradient reaches the global lstm") {
  Config cfg = tiny_cfg(Objective::g_mlm);
  PretrainModel m = build_pretrain_model(cfg);
  Vocabulary v = small_vocab();
  Document d = words_doc({{"aa", "bb"}, {"cc", "dd"}});
  MaskSet z;
  z.positions = {{0, 1}};
  Graph g;
  LossResult r = global_mlm_loss(g, *m.bi, m.head_a, encode_ids(apply_mask(d, z), v),
                                 encode_ids(d, v), z);
  m.store.zero_grad();
  g.backward(r.loss);
  bool nonzero = false;
  for (const auto& [name, t] : m.store.items()) {
    if (name.find(".global.") == std::string::npos || !t.has_grad()) continue;
    for (real gv : t.grad())
      if (gv != 0) nonzero = true;
  }
  CHECK(nonzero);
  CHECK_THROWS_AS(global_mlm_loss(g, *m.bi, m.head_a, encode_ids(d, v), encode_ids(d, v),
                                  MaskSet{}),
                  DataError);
}

TEST_CASE("mlm losses match finite differences") {
  Config cfg = tiny_cfg(Objective::g_mlm);
  PretrainModel m = build_pretrain_model(cfg);
  Rng spread(41);
  for (const auto& [name, t] : m.store.items()) {
    Tensor h = t;
    for (real& val : h.value()) val = spread.uniform(-0.7, 0.7);
  }
  Vocabulary v = small_vocab();
  Document d = words_doc({{"aa", "bb", "cc"}, {"dd", "ee"}});
  MaskSet z;
  z.positions = {{0, 1}, {1, 0}};
  EncodedDoc masked = encode_ids(apply_mask(d, z), v);
  EncodedDoc orig = encode_ids(d, v);
  auto loss_fn = [&](Graph& g) {
    return global_mlm_loss(g, *m.bi, m.head_a, masked, orig, z).loss;
  };
  m.store.zero_grad();
  Graph g;
  g.backward(loss_fn(g));
  Rng pick(42);
  for (const auto& [name, t] : m.store.items()) {
    auto rep = fdcheck::check_param(loss_fn, t, fdcheck::sample_elems(t, 3, pick));
    CHECK_MESSAGE(rep.failures == 0, name);
  }
}

TEST_CASE("objective/architecture pairing is enforced") {
  Config cfg = tiny_cfg(Objective::g_mlm);
  cfg.arch = Arch::lr_hlstm;
  CHECK_THROWS_AS(build_pretrain_model(cfg), ConfigError);
  Config cfg2 = tiny_cfg(Objective::g_lm);
  cfg2.arch = Arch::bi_hlstm;
  CHECK_THROWS_AS(build_pretrain_model(cfg2), ConfigError);
}

TEST_CASE("pretrain heads are excluded from fine-tuning scopes") {
  Config cfg = tiny_cfg(Objective::g_mlm);
  PretrainModel m = build_pretrain_model(cfg);
  std::vector<std::string> enc_prefixes = {"enc."};
  auto enc_names = m.store.names_with_prefix(enc_prefixes);
  std::vector<std::string> head_prefixes = {"head."};
  auto head_names = m.store.names_with_prefix(head_prefixes);
  CHECK(!enc_names.empty());
  CHECK(!head_names.empty());
  CHECK(enc_names.size() + head_names.size() == m.store.size());
}

TEST_CASE("pretrain_run is deterministic and learns on a tiny corpus") {
  auto docs = synth::overfit_corpus(8, 23);
  Config cfg = tiny_cfg(Objective::local_mlm);
  cfg.run.epochs = 3;
  cfg.optim.lr = static_cast<real>(0.05);
  std::vector<Document> trunc;
  for (const auto& d : docs)
    trunc.push_back(truncate(d, cfg.limits.max_blocks, cfg.limits.max_tokens_per_block,
                             cfg.limits.max_total_tokens));
  Vocabulary v = Vocabulary::build(trunc, cfg.limits.vocab_size);

  std::ostringstream log1, log2;
  PretrainResult r1 = pretrain_run(cfg, docs, v, &log1);
  PretrainResult r2 = pretrain_run(cfg, docs, v, &log2);
  CHECK(log1.str() == log2.str());  // fixed seed, identical loss logs
  CHECK(r1.last_epoch_mean < std::log(static_cast<real>(v.size())));
}

TEST_CASE("pretrain_run rejects an empty corpus") {
  Config cfg = tiny_cfg(Objective::local_mlm);
  Vocabulary v = small_vocab();
  CHECK_THROWS_AS(pretrain_run(cfg, {}, v, nullptr), DataError);
}
