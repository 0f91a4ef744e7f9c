#include "docenc/synth.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace docenc::synth {

using json = nlohmann::json;

namespace {

// Surface forms share a per-topic prefix so the char-CNN has signal.
const std::vector<std::string> kTopicPrefixes = {"bar", "cel", "dun", "fir", "gol", "him",
                                                 "jor", "kal", "lum", "mer", "nov", "pex"};

std::string rand_suffix(Rng& rng, size_t len) {
  std::string s;
  for (size_t i = 0; i < len; ++i) s += static_cast<char>('a' + rng.index(26));
  return s;
}

std::vector<std::vector<std::string>> topic_vocabs(Rng& rng, size_t words_per_topic) {
  std::vector<std::vector<std::string>> vocabs;
  for (const auto& prefix : kTopicPrefixes) {
    std::vector<std::string> words;
    while (words.size() < words_per_topic) {
      std::string w = prefix + rand_suffix(rng, 2);
      if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
    vocabs.push_back(std::move(words));
  }
  return vocabs;
}

std::vector<std::string> filler_vocab(Rng& rng, size_t n) {
  std::vector<std::string> words;
  while (words.size() < n) {
    std::string w = "fil" + rand_suffix(rng, 2);
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return words;
}

std::string sentence_from(Rng& rng, const std::vector<std::string>& vocab, size_t lo,
                          size_t hi) {
  const size_t n = lo + rng.index(hi - lo + 1);
  std::string s;
  for (size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += vocab[rng.index(vocab.size())];
  }
  return s;
}

}  // namespace

std::vector<SegExample> segmentation(size_t count, uint64_t seed) {
  Rng rng(seed);
  auto vocabs = topic_vocabs(rng, 15);
  std::vector<SegExample> out;
  out.reserve(count);
  for (size_t d = 0; d < count; ++d) {
    SegExample ex;
    ex.doc.id = "seg" + std::to_string(d);
    const size_t segments = 3 + rng.index(4);
    size_t prev_topic = vocabs.size();
    for (size_t s = 0; s < segments; ++s) {
      size_t topic = rng.index(vocabs.size());
      while (topic == prev_topic) topic = rng.index(vocabs.size());  // force a topic change
      prev_topic = topic;
      const size_t sentences = 3 + rng.index(3);
      for (size_t i = 0; i < sentences; ++i) {
        ex.doc.blocks.push_back(TextBlock{tokenize(sentence_from(rng, vocabs[topic], 4, 8))});
        ex.labels.push_back(i + 1 == sentences ? 1 : 0);
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<RetrievalExample> retrieval(size_t count, uint64_t seed) {
  Rng rng(seed);
  auto fillers = filler_vocab(rng, 30);
  std::vector<RetrievalExample> out;
  out.reserve(count);
  for (size_t d = 0; d < count; ++d) {
    RetrievalExample ex;
    ex.doc.id = "ret" + std::to_string(d);
    const size_t paragraphs = 4 + rng.index(5);
    std::vector<std::string> keywords;
    for (size_t p = 0; p < paragraphs; ++p) {
      std::string kw;
      do {
        kw = "kw" + rand_suffix(rng, 2);
      } while (std::find(keywords.begin(), keywords.end(), kw) != keywords.end());
      keywords.push_back(kw);
      std::string text = sentence_from(rng, fillers, 5, 9);
      // Plant the keyword at a random position.
      Tokens toks = tokenize(text);
      toks.insert(toks.begin() + static_cast<ptrdiff_t>(rng.index(toks.size() + 1)), kw);
      ex.doc.blocks.push_back(TextBlock{toks});
    }
    const size_t gold = rng.index(paragraphs);
    ex.gold = {gold};
    ex.question = "where is " + keywords[gold];
    out.push_back(std::move(ex));
  }
  return out;
}

const char* kSummMarker = "zmarkz";

std::vector<SummExample> summarization(size_t count, uint64_t seed) {
  Rng rng(seed);
  auto fillers = filler_vocab(rng, 30);
  std::vector<SummExample> out;
  out.reserve(count);
  for (size_t d = 0; d < count; ++d) {
    SummExample ex;
    ex.doc.id = "summ" + std::to_string(d);
    const size_t sentences = 6 + rng.index(5);
    const size_t markers = 1 + rng.index(3);
    std::vector<size_t> marked(sentences, 0);
    for (size_t m = 0; m < markers;) {
      const size_t i = rng.index(sentences);
      if (!marked[i]) {
        marked[i] = 1;
        ++m;
      }
    }
    std::vector<std::string> summary_parts;
    for (size_t i = 0; i < sentences; ++i) {
      Tokens toks = tokenize(sentence_from(rng, fillers, 4, 8));
      if (marked[i]) {
        toks.insert(toks.begin() + static_cast<ptrdiff_t>(rng.index(toks.size() + 1)),
                    kSummMarker);
        std::string joined;
        for (const auto& t : toks) {
          if (!joined.empty()) joined += ' ';
          joined += t;
        }
        summary_parts.push_back(joined);
      }
      ex.doc.blocks.push_back(TextBlock{toks});
    }
    for (const auto& part : summary_parts) {
      if (!ex.summary.empty()) ex.summary += ' ';
      ex.summary += part;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<PlantedDoc> planted(size_t count, uint64_t seed, size_t num_pairs) {
  // The key/value pairs and fillers are fixed per num_pairs so corpora drawn
  // with different seeds (train vs probe) share the same planted vocabulary.
  Rng vocab_rng(0x9e3779b9u ^ (num_pairs * 7919));
  auto fillers = filler_vocab(vocab_rng, 20);
  std::vector<std::string> keys, values;
  std::vector<std::string> used;
  for (size_t p = 0; p < num_pairs; ++p) {
    std::string sfx;
    do {
      sfx = rand_suffix(vocab_rng, 2);
    } while (std::find(used.begin(), used.end(), sfx) != used.end());
    used.push_back(sfx);
    keys.push_back("key" + sfx);
    values.push_back("val" + sfx);
  }
  Rng rng(seed);
  std::vector<PlantedDoc> out;
  out.reserve(count);
  for (size_t d = 0; d < count; ++d) {
    PlantedDoc pd;
    pd.pair_id = rng.index(num_pairs);
    pd.doc.id = "pl" + std::to_string(d);
    // Minimal shape: the value in the last block is recoverable only from
    // the key in the first; the bridge block carries no pair information.
    TextBlock b1{{"key", keys[pd.pair_id]}};
    TextBlock b2{{"mid", fillers[rng.index(8)]}};
    TextBlock b3{{"value", values[pd.pair_id]}};
    pd.doc.blocks = {b1, b2, b3};
    pd.value_block = 2;
    pd.value_pos = 1;
    out.push_back(std::move(pd));
  }
  return out;
}

std::vector<std::string> random_word_list(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> vocab;
  while (vocab.size() < n) {
    std::string w = rand_suffix(rng, 5);
    if (std::find(vocab.begin(), vocab.end(), w) == vocab.end()) vocab.push_back(w);
  }
  return vocab;
}

std::vector<Document> random_text(size_t count, uint64_t seed, size_t vocab_words,
                                  size_t max_blocks, size_t max_tokens) {
  Rng rng(seed + 0x1234567);
  auto vocab = random_word_list(vocab_words, seed);
  std::vector<Document> out;
  out.reserve(count);
  for (size_t d = 0; d < count; ++d) {
    Document doc;
    doc.id = "rnd" + std::to_string(d);
    const size_t blocks = 1 + rng.index(max_blocks);
    for (size_t b = 0; b < blocks; ++b) {
      const size_t toks = 2 + rng.index(max_tokens - 1);
      TextBlock tb;
      for (size_t t = 0; t < toks; ++t) tb.tokens.push_back(vocab[rng.index(vocab.size())]);
      doc.blocks.push_back(std::move(tb));
    }
    out.push_back(std::move(doc));
  }
  return out;
}

std::vector<Document> overfit_corpus(size_t count, uint64_t seed) {
  Rng rng(seed);
  // Few token types, cyclic patterns: every position is predictable from
  // its neighbours.
  std::vector<std::string> vocab;
  while (vocab.size() < 8) {
    std::string w = "tok" + rand_suffix(rng, 1);
    if (std::find(vocab.begin(), vocab.end(), w) == vocab.end()) vocab.push_back(w);
  }
  std::vector<Document> out;
  out.reserve(count);
  for (size_t d = 0; d < count; ++d) {
    Document doc;
    doc.id = "ov" + std::to_string(d);
    const size_t blocks = 4 + rng.index(3);
    for (size_t b = 0; b < blocks; ++b) {
      TextBlock tb;
      const size_t toks = 6 + rng.index(5);
      const size_t start = rng.index(vocab.size());
      for (size_t t = 0; t < toks; ++t) tb.tokens.push_back(vocab[(start + t) % vocab.size()]);
      doc.blocks.push_back(std::move(tb));
    }
    out.push_back(std::move(doc));
  }
  return out;
}

std::string doc_to_json(const Document& doc) {
  json j;
  j["id"] = doc.id;
  std::vector<std::string> blocks;
  for (const auto& b : doc.blocks) {
    std::string s;
    for (const auto& t : b.tokens) {
      if (!s.empty()) s += ' ';
      s += t;
    }
    blocks.push_back(s);
  }
  j["blocks"] = blocks;
  return j.dump();
}

std::string seg_to_json(const SegExample& ex) {
  json j = json::parse(doc_to_json(ex.doc));
  j["labels"] = ex.labels;
  return j.dump();
}

std::string ret_to_json(const RetrievalExample& ex) {
  json j = json::parse(doc_to_json(ex.doc));
  j["question"] = ex.question;
  j["gold"] = ex.gold;
  return j.dump();
}

std::string summ_to_json(const SummExample& ex) {
  json j = json::parse(doc_to_json(ex.doc));
  j["summary"] = ex.summary;
  return j.dump();
}

namespace {

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  for (const auto& l : lines) f << l << "\n";
}

}  // namespace

void write_files(TaskKind task, const std::string& out_dir, size_t count, uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  const size_t held = std::max<size_t>(count / 5, 1);
  const std::string name = to_string(task);
  struct Split {
    const char* suffix;
    size_t n;
    uint64_t seed;
  };
  const Split splits[3] = {{"train", count, seed},
                           {"dev", held, seed + 1000003},
                           {"test", held, seed + 2000003}};
  for (const auto& sp : splits) {
    std::vector<std::string> lines;
    switch (task) {
      case TaskKind::segmentation:
        for (const auto& ex : segmentation(sp.n, sp.seed)) lines.push_back(seg_to_json(ex));
        break;
      case TaskKind::retrieval:
        for (const auto& ex : retrieval(sp.n, sp.seed)) lines.push_back(ret_to_json(ex));
        break;
      case TaskKind::summarization:
        for (const auto& ex : summarization(sp.n, sp.seed)) lines.push_back(summ_to_json(ex));
        break;
    }
    write_lines(out_dir + "/" + name + "." + sp.suffix + ".jsonl", lines);
  }
}

void write_planted_files(const std::string& out_dir, size_t count, uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> train, probe;
  for (const auto& pd : planted(count, seed)) train.push_back(doc_to_json(pd.doc));
  for (const auto& pd : planted(std::max<size_t>(count / 5, 1), seed + 1000003)) {
    json j = json::parse(doc_to_json(pd.doc));
    j["value_block"] = pd.value_block;
    j["value_pos"] = pd.value_pos;
    j["pair"] = pd.pair_id;
    probe.push_back(j.dump());
  }
  write_lines(out_dir + "/planted.train.jsonl", train);
  write_lines(out_dir + "/planted.probe.jsonl", probe);
}

}  // namespace docenc::synth
