#include "docenc/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace docenc {

using json = nlohmann::json;

LayerMixer make_mixer(ParamStore& store, const std::string& name, size_t layers, Rng& rng) {
  (void)rng;  // equal raw scalars: uniform weights at init
  LayerMixer m;
  m.raw = store.add(name, Tensor::zeros({layers}, true));
  return m;
}

Tensor LayerMixer::weights(Graph& g) const { return g.softmax(raw); }

std::vector<real> LayerMixer::weight_values() const {
  std::vector<real> w(raw.numel());
  real mx = raw.value()[0];
  for (real v : raw.value()) mx = std::max(mx, v);
  real z = 0;
  for (size_t i = 0; i < w.size(); ++i) z += (w[i] = std::exp(raw.value()[i] - mx));
  for (real& v : w) v /= z;
  return w;
}

Tensor layer_mix(Graph& g, std::span<const Tensor> layers, const LayerMixer& mixer) {
  if (layers.size() != mixer.raw.numel())
    throw DimError("layer_mix: " + std::to_string(layers.size()) + " layers vs mixer of " +
                   std::to_string(mixer.raw.numel()));
  Tensor w = mixer.weights(g);
  Tensor out;
  for (size_t l = 0; l < layers.size(); ++l) {
    Tensor term = g.smul(layers[l], g.slice(w, l, 1));
    out = l == 0 ? term : g.add(out, term);
  }
  return out;
}

FfnnHead make_ffnn(ParamStore& store, const std::string& prefix, size_t in_dim, size_t hidden,
                   size_t out_dim, Rng& rng) {
  FfnnHead h;
  h.w1 = store.add(prefix + ".fc1.W", Tensor::fan_in_param({hidden, in_dim}, rng));
  h.b1 = store.add(prefix + ".fc1.b", Tensor::fan_in_param({hidden}, rng));
  h.w2 = store.add(prefix + ".fc2.W", Tensor::fan_in_param({out_dim, hidden}, rng));
  h.b2 = store.add(prefix + ".fc2.b", Tensor::fan_in_param({out_dim}, rng));
  return h;
}

Tensor FfnnHead::apply(Graph& g, const Tensor& in) const {
  return g.linear(g.relu(g.linear(in, w1, b1)), w2, b2);
}

// ---------------------------------------------------------------------------
// Data loading

namespace {

json parse_record(const std::string& line, size_t lineno, const char* what) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw DataError(std::string(what) + " line " + std::to_string(lineno) +
                    ": malformed record");
  return j;
}

Document doc_from_blocks(const json& j, size_t lineno, const char* what) {
  Document doc;
  doc.id = j.value("id", "line" + std::to_string(lineno));
  for (const auto& b : j.at("blocks")) {
    TextBlock tb{tokenize(b.get<std::string>())};
    if (tb.tokens.empty())
      throw DataError(std::string(what) + " line " + std::to_string(lineno) +
                      ": empty block in document " + doc.id);
    doc.blocks.push_back(std::move(tb));
  }
  if (doc.blocks.empty())
    throw DataError(std::string(what) + " line " + std::to_string(lineno) + ": empty document");
  return doc;
}

template <typename F>
void for_each_line(const std::string& path, const char* what, F&& fn) {
  std::ifstream f(path);
  if (!f) throw DataError(std::string("cannot open ") + what + " file: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(line, lineno);
  }
}

}  // namespace

std::vector<SegExample> load_seg_examples(const std::string& path, const Limits& limits) {
  std::vector<SegExample> out;
  for_each_line(path, "segmentation", [&](const std::string& line, size_t lineno) {
    json j = parse_record(line, lineno, "segmentation");
    SegExample ex;
    ex.doc = doc_from_blocks(j, lineno, "segmentation");
    ex.labels = j.at("labels").get<std::vector<int>>();
    if (ex.labels.size() != ex.doc.blocks.size())
      throw DataError("segmentation line " + std::to_string(lineno) +
                      ": label count does not match block count");
    for (int l : ex.labels)
      if (l != 0 && l != 1)
        throw DataError("segmentation line " + std::to_string(lineno) + ": labels must be 0/1");
    ex.doc = truncate(ex.doc, limits.max_blocks, limits.max_tokens_per_block,
                      limits.max_total_tokens);
    ex.labels.resize(ex.doc.blocks.size());
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<RetrievalExample> load_retrieval_examples(const std::string& path,
                                                      const Limits& limits) {
  std::vector<RetrievalExample> out;
  for_each_line(path, "retrieval", [&](const std::string& line, size_t lineno) {
    json j = parse_record(line, lineno, "retrieval");
    RetrievalExample ex;
    ex.doc = doc_from_blocks(j, lineno, "retrieval");
    ex.question = j.at("question").get<std::string>();
    if (tokenize(ex.question).empty())
      throw DataError("retrieval line " + std::to_string(lineno) + ": empty question");
    ex.doc = truncate(ex.doc, limits.max_blocks, limits.max_tokens_per_block,
                      limits.max_total_tokens);
    for (size_t gi : j.at("gold").get<std::vector<size_t>>())
      if (gi < ex.doc.blocks.size()) ex.gold.push_back(gi);
    if (ex.gold.empty())
      throw DataError("retrieval line " + std::to_string(lineno) +
                      ": no gold paragraph within limits");
    out.push_back(std::move(ex));
  });
  return out;
}

std::vector<SummExample> load_summ_examples(const std::string& path, const Limits& limits) {
  std::vector<SummExample> out;
  for_each_line(path, "summarization", [&](const std::string& line, size_t lineno) {
    json j = parse_record(line, lineno, "summarization");
    SummExample ex;
    ex.doc = doc_from_blocks(j, lineno, "summarization");
    ex.summary = j.at("summary").get<std::string>();
    if (ex.summary.empty())
      throw DataError("summarization line " + std::to_string(lineno) + ": empty summary");
    ex.doc = truncate(ex.doc, limits.max_blocks, limits.max_tokens_per_block,
                      limits.max_total_tokens);
    OracleResult oracle = oracle_labels(ex.doc, ex.summary);
    ex.oracle_picks = oracle.picks;
    ex.oracle_gains = oracle.gains;
    out.push_back(std::move(ex));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Retrieval features

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",  "an",  "the",  "of",    "in",  "on",    "at",  "to",  "is",  "are", "was",
      "be", "was", "were", "what",  "who", "when",  "where", "which", "how", "why", "do",
      "does", "did", "and", "or",   "it",  "this",  "that"};
  return words;
}

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::map<std::string, real> tf(const Tokens& toks) {
  std::map<std::string, real> counts;
  for (const auto& t : toks) counts[lower(t)] += 1;
  return counts;
}

}  // namespace

std::array<real, 5> retrieval_features(const Document& doc, const Tokens& question_tokens,
                                       size_t index) {
  if (index >= doc.blocks.size()) throw DataError("retrieval_features: index out of range");
  const size_t k = doc.blocks.size();
  std::array<real, 5> s{};
  s[0] = static_cast<real>(index + 1) / static_cast<real>(k);
  s[1] = index == 0 ? 1 : 0;

  // idf over this document's paragraphs, smoothed to stay positive.
  std::map<std::string, size_t> df;
  std::vector<std::map<std::string, real>> para_tf;
  para_tf.reserve(k);
  for (const auto& b : doc.blocks) {
    auto counts = tf(b.tokens);
    for (const auto& [term, c] : counts) ++df[term];
    para_tf.push_back(std::move(counts));
  }
  auto idf = [&](const std::string& term) {
    const auto it = df.find(term);
    const size_t d = it == df.end() ? 0 : it->second;
    return std::log((real(1) + static_cast<real>(k)) / (real(1) + static_cast<real>(d))) +
           real(1);
  };
  auto q_tf = tf(question_tokens);
  const auto& p_tf = para_tf[index];
  real dot = 0, qn = 0, pn = 0;
  for (const auto& [term, c] : q_tf) {
    const real w = c * idf(term);
    qn += w * w;
    auto it = p_tf.find(term);
    if (it != p_tf.end()) dot += w * it->second * idf(term);
  }
  for (const auto& [term, c] : p_tf) {
    const real w = c * idf(term);
    pn += w * w;
  }
  s[2] = qn > 0 && pn > 0 ? dot / (std::sqrt(qn) * std::sqrt(pn)) : 0;

  // Fraction of question content words present in the paragraph; all tokens
  // count as content when the question is stopwords-only.
  std::set<std::string> q_content;
  for (const auto& t : question_tokens) {
    const std::string lt = lower(t);
    if (!stopwords().count(lt)) q_content.insert(lt);
  }
  if (q_content.empty())
    for (const auto& t : question_tokens) q_content.insert(lower(t));
  size_t found = 0;
  for (const auto& term : q_content)
    if (p_tf.count(term)) ++found;
  s[3] = q_content.empty() ? 0
                           : static_cast<real>(found) / static_cast<real>(q_content.size());
  s[4] = std::log(real(1) + static_cast<real>(doc.blocks[index].tokens.size()));
  return s;
}

// ---------------------------------------------------------------------------
// Summarization oracle and selection

namespace {

Tokens block_tokens_lower(const TextBlock& b) {
  Tokens out;
  out.reserve(b.tokens.size());
  for (const auto& t : b.tokens) out.push_back(lower(t));
  return out;
}

Tokens selection_tokens(const Document& doc, const std::vector<size_t>& picks) {
  std::vector<size_t> order = picks;
  std::sort(order.begin(), order.end());  // concatenate in document order
  Tokens out;
  for (size_t i : order) {
    Tokens bt = block_tokens_lower(doc.blocks[i]);
    out.insert(out.end(), bt.begin(), bt.end());
  }
  return out;
}

}  // namespace

OracleResult oracle_labels(const Document& doc, const std::string& gold_summary) {
  if (gold_summary.empty()) throw DataError("oracle_labels: empty gold summary");
  const Tokens gold = rouge_tokens(gold_summary);
  OracleResult res;
  real current = 0;
  for (int round = 0; round < 3; ++round) {
    real best_score = current;
    size_t best_idx = doc.blocks.size();
    for (size_t i = 0; i < doc.blocks.size(); ++i) {
      if (std::find(res.picks.begin(), res.picks.end(), i) != res.picks.end()) continue;
      std::vector<size_t> trial = res.picks;
      trial.push_back(i);
      const real score = rouge_avg(selection_tokens(doc, trial), gold);
      if (score > best_score) {  // strict: ties keep the earlier candidate
        best_score = score;
        best_idx = i;
      }
    }
    if (best_idx == doc.blocks.size()) break;  // no positive gain left
    res.picks.push_back(best_idx);
    res.gains.push_back(best_score - current);
    current = best_score;
  }
  return res;
}

std::vector<size_t> select_summary(std::span<const real> scores) {
  if (scores.empty()) throw DataError("select_summary: no sentences");
  std::vector<size_t> idx(scores.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(std::min<size_t>(3, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// Task model

size_t TaskModel::rep_dim() const {
  return bi ? bi->global_out_dim() : lr->out_dim();
}

TaskModel build_task_model(const Config& cfg) {
  TaskModel m;
  m.cfg = cfg;
  Rng rng(cfg.seed);
  if (cfg.arch == Arch::bi_hlstm)
    m.bi = std::make_unique<HierEncoder>(HierEncoder::Mode::bi, cfg.encoder, m.store, "enc.bi",
                                         rng);
  else
    m.lr = std::make_unique<LrHlstm>(cfg.encoder, m.store, "enc", rng);

  const size_t rep = m.rep_dim();
  switch (cfg.task) {
    case TaskKind::segmentation:
      m.head = make_ffnn(m.store, "task.seg", rep, cfg.head_hidden, 2, rng);
      break;
    case TaskKind::retrieval:
      m.mixer = make_mixer(m.store, "task.mixer.raw", cfg.encoder.global_layers + 1, rng);
      m.head = make_ffnn(m.store, "task.ret", 6, cfg.head_hidden, 1, rng);
      break;
    case TaskKind::summarization: {
      m.mixer = make_mixer(m.store, "task.mixer.raw", cfg.encoder.global_layers + 1, rng);
      const size_t h = cfg.encoder.global_hidden;
      m.summ_fwd = make_lstm_params(m.store, "task.summ.lstm.fwd", rep, h, rng);
      m.summ_bwd = make_lstm_params(m.store, "task.summ.lstm.bwd", rep, h, rng);
      // [d; refined p_i; position; length]
      m.head = make_ffnn(m.store, "task.summ", 4 * h + 2, cfg.head_hidden, 1, rng);
      break;
    }
  }
  return m;
}

std::vector<std::string> scope_prefixes(Arch arch, InitScope scope) {
  if (scope == InitScope::none) return {};
  if (arch == Arch::bi_hlstm) {
    if (scope == InitScope::local) return {"enc.bi.char.", "enc.bi.local."};
    return {"enc.bi."};
  }
  if (scope == InitScope::local)
    return {"enc.l2r.char.", "enc.l2r.local.", "enc.r2l.char.", "enc.r2l.local."};
  return {"enc.l2r.", "enc.r2l."};
}

std::vector<Tensor> TaskModel::encode_top(Graph& g, const EncodedDoc& doc) const {
  if (bi) return bi->encode(g, doc).p;
  return lr->encode(g, doc).p_hat;
}

std::vector<std::vector<Tensor>> TaskModel::encode_layers(Graph& g,
                                                          const EncodedDoc& doc) const {
  if (bi) return bi->encode(g, doc).layers;
  return lr->encode(g, doc).layers;
}

std::vector<Tensor> TaskModel::encode_mixed(Graph& g, const EncodedDoc& doc) const {
  auto layers = encode_layers(g, doc);
  std::vector<Tensor> out;
  out.reserve(layers.size());
  for (const auto& per_block : layers) out.push_back(layer_mix(g, per_block, mixer));
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation

std::vector<Tensor> seg_logits(Graph& g, const TaskModel& m, const EncodedDoc& doc) {
  std::vector<Tensor> out;
  auto p = m.encode_top(g, doc);
  out.reserve(p.size());
  for (const auto& pi : p) out.push_back(m.head.apply(g, pi));
  return out;
}

Tensor seg_loss(Graph& g, const TaskModel& m, const EncodedDoc& doc,
                const std::vector<int>& labels, real pos_weight) {
  auto logits = seg_logits(g, m, doc);
  if (labels.size() != logits.size()) throw DataError("seg_loss: label/block mismatch");
  std::vector<Tensor> terms;
  terms.reserve(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    Tensor t = g.softmax_xent(logits[i], static_cast<size_t>(labels[i]));
    terms.push_back(labels[i] == 1 ? g.scale(t, pos_weight) : t);
  }
  return g.scale(g.vsum(terms), real(1) / static_cast<real>(terms.size()));
}

std::vector<real> seg_boundary_probs(const TaskModel& m, const EncodedDoc& doc) {
  Graph g;
  auto logits = seg_logits(g, m, doc);
  std::vector<real> probs;
  probs.reserve(logits.size());
  for (const auto& l : logits) {
    const real a = l.value()[0], b = l.value()[1];
    const real mx = std::max(a, b);
    const real ea = std::exp(a - mx), eb = std::exp(b - mx);
    probs.push_back(eb / (ea + eb));
  }
  return probs;
}

// ---------------------------------------------------------------------------
// Retrieval

namespace {

EncodedDoc encode_question(const RetrievalExample& ex, const Vocabulary& vocab) {
  Document q;
  q.id = "q";
  q.blocks.push_back(TextBlock{tokenize(ex.question)});
  return encode_ids(q, vocab);
}

}  // namespace

std::vector<Tensor> retrieval_score_tensors(Graph& g, const TaskModel& m,
                                            const RetrievalExample& ex,
                                            const Vocabulary& vocab) {
  EncodedDoc doc = encode_ids(ex.doc, vocab);
  EncodedDoc q = encode_question(ex, vocab);
  auto p_mixed = m.encode_mixed(g, doc);
  // The question runs through the same encoder and mixer as the passages.
  Tensor q_mixed = m.encode_mixed(g, q)[0];
  const Tokens q_toks = tokenize(ex.question);
  std::vector<Tensor> scores;
  scores.reserve(p_mixed.size());
  for (size_t i = 0; i < p_mixed.size(); ++i) {
    Tensor s0 = g.dot(p_mixed[i], q_mixed);
    auto f = retrieval_features(ex.doc, q_toks, i);
    Tensor feats = Tensor::from({5}, {f[0], f[1], f[2], f[3], f[4]});
    scores.push_back(m.head.apply(g, g.concat({s0, feats}, 0)));
  }
  return scores;
}

Tensor retrieval_loss(Graph& g, const TaskModel& m, const RetrievalExample& ex,
                      const Vocabulary& vocab) {
  auto scores = retrieval_score_tensors(g, m, ex, vocab);
  // Listwise softmax over the document's paragraphs against the first gold.
  Tensor all = g.concat(std::span<const Tensor>(scores), 0);
  return g.softmax_xent(all, ex.gold.front());
}

std::vector<real> retrieval_scores(const TaskModel& m, const RetrievalExample& ex,
                                   const Vocabulary& vocab) {
  Graph g;
  auto ts = retrieval_score_tensors(g, m, ex, vocab);
  std::vector<real> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(t.item());
  return out;
}

std::vector<real> zero_shot_scores(const TaskModel& m, const RetrievalExample& ex,
                                   const Vocabulary& vocab) {
  Graph g;
  EncodedDoc doc = encode_ids(ex.doc, vocab);
  EncodedDoc q = encode_question(ex, vocab);
  auto p_layers = m.encode_layers(g, doc);
  auto q_layers = m.encode_layers(g, q)[0];
  const real u = real(1) / static_cast<real>(q_layers.size());
  auto mix_uniform = [&](const std::vector<Tensor>& layers) {
    Tensor out;
    for (size_t l = 0; l < layers.size(); ++l) {
      Tensor term = g.scale(layers[l], u);
      out = l == 0 ? term : g.add(out, term);
    }
    return out;
  };
  Tensor q_mixed = mix_uniform(q_layers);
  std::vector<real> scores;
  scores.reserve(p_layers.size());
  for (const auto& pl : p_layers) scores.push_back(g.dot(mix_uniform(pl), q_mixed).item());
  return scores;
}

// ---------------------------------------------------------------------------
// Summarization

std::vector<Tensor> summ_score_tensors(Graph& g, const TaskModel& m, const EncodedDoc& doc) {
  auto p_mixed = m.encode_mixed(g, doc);
  // Refinement Bi-LSTM over the mixed representations.
  auto fwd = lstm_run(g, p_mixed, false, m.summ_fwd);
  auto bwd = lstm_run(g, p_mixed, true, m.summ_bwd);
  std::vector<Tensor> refined;
  refined.reserve(p_mixed.size());
  for (size_t i = 0; i < p_mixed.size(); ++i) refined.push_back(g.concat({fwd[i], bwd[i]}, 0));
  Tensor d = g.pool_max(g.stack_rows(refined));
  const size_t k = refined.size();
  std::vector<Tensor> scores;
  scores.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    const real pos = static_cast<real>(i + 1) / static_cast<real>(k);
    const real len = std::log(real(1) + static_cast<real>(doc.blocks[i].size()));
    Tensor feats = Tensor::from({2}, {pos, len});
    scores.push_back(m.head.apply(g, g.concat({d, refined[i], feats}, 0)));
  }
  return scores;
}

Tensor summ_train_loss(Graph& g, std::span<const Tensor> scores, const OracleResult& oracle) {
  if (oracle.picks.empty()) throw DataError("summ_train_loss: empty oracle");
  Tensor all = g.concat(scores, 0);
  std::vector<Tensor> terms;
  terms.reserve(oracle.picks.size());
  for (size_t r = 0; r < oracle.picks.size(); ++r)
    terms.push_back(g.scale(g.softmax_xent(all, oracle.picks[r]), oracle.gains[r]));
  return g.vsum(terms);
}

Tensor summ_loss(Graph& g, const TaskModel& m, const SummExample& ex, const Vocabulary& vocab) {
  EncodedDoc doc = encode_ids(ex.doc, vocab);
  auto scores = summ_score_tensors(g, m, doc);
  OracleResult oracle{ex.oracle_picks, ex.oracle_gains};
  return summ_train_loss(g, scores, oracle);
}

std::vector<real> summ_scores(const TaskModel& m, const SummExample& ex,
                              const Vocabulary& vocab) {
  Graph g;
  EncodedDoc doc = encode_ids(ex.doc, vocab);
  auto ts = summ_score_tensors(g, m, doc);
  std::vector<real> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(t.item());
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

MetricReport eval_seg(const TaskModel& m, std::span<const SegExample> data,
                      const Vocabulary& vocab) {
  std::vector<int> preds, golds;
  for (const auto& ex : data) {
    auto probs = seg_boundary_probs(m, encode_ids(ex.doc, vocab));
    for (size_t i = 0; i < probs.size(); ++i) {
      preds.push_back(probs[i] > real(0.5) ? 1 : 0);
      golds.push_back(ex.labels[i]);
    }
  }
  PRF r = f1_score(preds, golds);
  MetricReport rep;
  rep.task = "segmentation";
  rep.metrics = {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
  rep.counts = {{"examples", data.size()},
                {"blocks", preds.size()},
                {"positives", static_cast<size_t>(std::count(golds.begin(), golds.end(), 1))}};
  return rep;
}

MetricReport eval_retrieval(const TaskModel& m, std::span<const RetrievalExample> data,
                            const Vocabulary& vocab, bool zero_shot) {
  std::vector<std::vector<int>> ranked;
  ranked.reserve(data.size());
  for (const auto& ex : data) {
    auto scores = zero_shot ? zero_shot_scores(m, ex, vocab) : retrieval_scores(m, ex, vocab);
    std::vector<size_t> idx(scores.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    std::vector<int> gold_in_rank;
    gold_in_rank.reserve(idx.size());
    for (size_t i : idx)
      gold_in_rank.push_back(
          std::find(ex.gold.begin(), ex.gold.end(), i) != ex.gold.end() ? 1 : 0);
    ranked.push_back(std::move(gold_in_rank));
  }
  MetricReport rep;
  rep.task = zero_shot ? "retrieval-zero-shot" : "retrieval";
  rep.metrics = {{"p_at_1", precision_at_1(ranked)}};
  rep.counts = {{"examples", data.size()}};
  return rep;
}

MetricReport eval_summ(const TaskModel& m, std::span<const SummExample> data,
                       const Vocabulary& vocab) {
  real r1 = 0, r2 = 0, rl = 0;
  for (const auto& ex : data) {
    auto scores = summ_scores(m, ex, vocab);
    auto picks = select_summary(scores);
    Tokens cand = selection_tokens(ex.doc, picks);
    Tokens gold = rouge_tokens(ex.summary);
    r1 += rouge_n(cand, gold, 1).f1;
    r2 += rouge_n(cand, gold, 2).f1;
    rl += rouge_l(cand, gold).f1;
  }
  const real n = static_cast<real>(data.size());
  MetricReport rep;
  rep.task = "summarization";
  rep.metrics = {{"rouge1", r1 / n}, {"rouge2", r2 / n}, {"rougeL", rl / n},
                 {"rouge_avg", (r1 + r2 + rl) / (3 * n)}};
  rep.counts = {{"examples", data.size()}};
  return rep;
}

// ---------------------------------------------------------------------------
// Fine-tuning

size_t TaskData::size(TaskKind t) const {
  switch (t) {
    case TaskKind::segmentation: return seg.size();
    case TaskKind::retrieval: return ret.size();
    case TaskKind::summarization: return summ.size();
  }
  return 0;
}

TaskData load_task_data(TaskKind task, const std::string& path, const Limits& limits) {
  TaskData d;
  switch (task) {
    case TaskKind::segmentation: d.seg = load_seg_examples(path, limits); break;
    case TaskKind::retrieval: d.ret = load_retrieval_examples(path, limits); break;
    case TaskKind::summarization: d.summ = load_summ_examples(path, limits); break;
  }
  return d;
}

namespace {

Vocabulary task_vocab(const Config& cfg, const TaskData& train) {
  // The encoder consumes characters only; the vocabulary just provides token
  // ids for the encode step and does not affect task heads.
  std::vector<Document> docs;
  for (const auto& ex : train.seg) docs.push_back(ex.doc);
  for (const auto& ex : train.ret) docs.push_back(ex.doc);
  for (const auto& ex : train.summ) docs.push_back(ex.doc);
  return Vocabulary::build(docs, cfg.limits.vocab_size);
}

real headline_metric(const MetricReport& rep, TaskKind task) {
  const char* key = task == TaskKind::segmentation ? "f1"
                    : task == TaskKind::retrieval  ? "p_at_1"
                                                   : "rouge_avg";
  for (const auto& [k, v] : rep.metrics)
    if (k == key) return v;
  return 0;
}

std::vector<size_t> epoch_order(uint64_t seed, size_t epoch, size_t n) {
  Rng rng(seed ^ (0xd1b54a32d192ed03ULL * (epoch + 1)));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  return order;
}

std::string fmt_real(real v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
  return buf;
}

}  // namespace

FinetuneResult finetune_run(const Config& cfg, const TaskData& train, const TaskData& dev,
                            InitScope scope, const Checkpoint* from, std::ostream* log,
                            const StepHook& on_step) {
  if (train.size(cfg.task) == 0) throw DataError("finetune: empty training set");
  TaskModel model = build_task_model(cfg);
  if (scope != InitScope::none) {
    if (!from) throw ConfigError("init scope " + to_string(scope) + " requires a checkpoint");
    auto prefixes = scope_prefixes(cfg.arch, scope);
    auto names = model.store.names_with_prefix(prefixes);
    if (names.empty()) throw IncompatError("no parameters match the requested init scope");
    from->restore_into(model.store, names);
  }
  Adam opt(model.store, cfg.optim);
  Vocabulary vocab = task_vocab(cfg, train);

  real pos_weight = 1;
  if (cfg.task == TaskKind::segmentation) {
    size_t pos = 0, neg = 0;
    for (const auto& ex : train.seg)
      for (int l : ex.labels) (l == 1 ? pos : neg)++;
    pos_weight = pos > 0 ? static_cast<real>(neg) / static_cast<real>(pos) : 1;
  }

  const TaskData& dev_set = dev.size(cfg.task) > 0 ? dev : train;
  auto evaluate = [&](const TaskData& data) {
    switch (cfg.task) {
      case TaskKind::segmentation: return eval_seg(model, data.seg, vocab);
      case TaskKind::retrieval: return eval_retrieval(model, data.ret, vocab);
      case TaskKind::summarization: return eval_summ(model, data.summ, vocab);
    }
    throw ConfigError("unknown task");
  };

  FinetuneResult res;
  real best = -1;
  uint64_t step = 0;
  const size_t n = train.size(cfg.task);
  for (size_t epoch = 0; epoch < cfg.run.epochs; ++epoch) {
    auto order = epoch_order(cfg.seed, epoch, n);
    for (size_t d : order) {
      Graph g;
      Tensor loss;
      switch (cfg.task) {
        case TaskKind::segmentation: {
          const auto& ex = train.seg[d];
          loss = seg_loss(g, model, encode_ids(ex.doc, vocab), ex.labels, pos_weight);
          break;
        }
        case TaskKind::retrieval:
          loss = retrieval_loss(g, model, train.ret[d], vocab);
          break;
        case TaskKind::summarization: {
          const auto& ex = train.summ[d];
          if (ex.oracle_picks.empty()) continue;  // no positive-gain sentence
          loss = summ_loss(g, model, ex, vocab);
          break;
        }
      }
      ++step;
      model.store.zero_grad();
      g.backward(loss);
      clip_grad_norm(model.store, cfg.run.clip_norm);
      opt.step();
      if (on_step) on_step(step, model);
      if (log)
        (*log) << "{\"step\":" << step << ",\"epoch\":" << epoch
               << ",\"loss\":" << fmt_real(loss.item()) << "}\n";
      if (cfg.run.max_steps > 0 && step >= cfg.run.max_steps) break;
    }
    MetricReport rep = evaluate(dev_set);
    res.per_epoch.push_back(rep);
    if (log) (*log) << rep.to_json_line() << "\n";
    const real metric = headline_metric(rep, cfg.task);
    if (metric > best) {
      best = metric;
      res.best = Checkpoint::capture(model.store, cfg.to_json_text(), nullptr);
      res.best.meta["epoch"] = std::to_string(epoch);
      res.best_dev = rep;
    }
    if (cfg.run.max_steps > 0 && step >= cfg.run.max_steps) break;
  }
  res.steps = step;
  return res;
}

}  // namespace docenc
