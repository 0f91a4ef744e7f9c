#include "docenc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <json.hpp>

namespace docenc {

using json = nlohmann::json;

size_t Document::total_tokens() const {
  size_t n = 0;
  for (const auto& b : blocks) n += b.tokens.size();
  return n;
}

size_t EncodedDoc::total_tokens() const {
  size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

std::vector<int> encode_chars(const std::string& token) {
  if (token == kMaskToken) return {chars::kMaskChar};
  std::vector<int> out;
  out.reserve(token.size());
  for (unsigned char c : token)
    out.push_back(c >= 0x20 && c <= 0x7e ? c - 0x20 : chars::kPlaceholder);
  if (out.empty()) out.push_back(chars::kPlaceholder);
  return out;
}

static bool is_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string word = text.substr(i, j - i);
    i = j;
    // Detach leading punctuation.
    size_t b = 0;
    while (b < word.size() && is_punct(word[b]) && word.size() - b > 1)
      out.push_back(std::string(1, word[b++]));
    // Detach trailing punctuation, preserving order.
    size_t e = word.size();
    std::vector<std::string> tail;
    while (e > b + 1 && is_punct(word[e - 1])) tail.push_back(std::string(1, word[--e]));
    if (e > b) out.push_back(word.substr(b, e - b));
    out.insert(out.end(), tail.rbegin(), tail.rend());
  }
  return out;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') &&
        (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      out.push_back(text.substr(start, i + 1 - start));
      start = i + 1;
    }
  }
  if (start < text.size()) out.push_back(text.substr(start));
  // Drop whitespace-only pieces.
  std::vector<std::string> kept;
  for (auto& s : out)
    if (std::any_of(s.begin(), s.end(),
                    [](unsigned char c) { return !std::isspace(c); }))
      kept.push_back(s);
  return kept;
}

void Vocabulary::insert(const std::string& tok) {
  index_.emplace(tok, static_cast<int>(tokens_.size()));
  tokens_.push_back(tok);
}

Vocabulary Vocabulary::build(const std::vector<Document>& corpus, size_t max_size) {
  if (max_size < 4) throw ConfigError("vocab max_size must be at least 4");
  std::map<std::string, size_t> freq;  // ordered: lexicographic tie-break for free
  for (const auto& doc : corpus)
    for (const auto& block : doc.blocks)
      for (const auto& tok : block.tokens) ++freq[tok];
  if (freq.empty()) throw DataError("cannot build vocabulary from an empty corpus");

  std::vector<std::pair<std::string, size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  v.insert("<pad>");
  v.insert("<unk>");
  v.insert("<mask>");
  for (const auto& [tok, f] : items) {
    if (v.tokens_.size() >= max_size) break;
    if (v.index_.count(tok)) continue;  // corpus token colliding with a reserved name
    v.insert(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  if (token == kMaskToken) return kMask;
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
    throw DataError("vocab index out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::string Vocabulary::to_lines() const {
  std::string out;
  for (size_t i = kReserved; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_lines(const std::string& lines) {
  Vocabulary v;
  v.insert("<pad>");
  v.insert("<unk>");
  v.insert("<mask>");
  size_t start = 0;
  while (start < lines.size()) {
    size_t end = lines.find('\n', start);
    if (end == std::string::npos) end = lines.size();
    std::string tok = lines.substr(start, end - start);
    start = end + 1;
    if (tok.empty()) continue;
    if (v.index_.count(tok)) throw DataError("duplicate token in vocabulary: " + tok);
    v.insert(tok);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write vocabulary file: " + path);
  f << to_lines();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read vocabulary file: " + path);
  std::string all, line;
  while (std::getline(f, line)) {
    all += line;
    all += '\n';
  }
  return from_lines(all);
}

static TextBlock make_block(const std::string& text) {
  return TextBlock{tokenize(text)};
}

LoadResult load_corpus(const std::string& path, BlockKind kind) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open corpus file: " + path);
  LoadResult res;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
        (!j.contains("blocks") && !j.contains("text"))) {
      res.errors.push_back("line " + std::to_string(lineno) + ": malformed corpus record");
      continue;
    }
    Document doc;
    try {
      doc.id = j.at("id").get<std::string>();
      std::vector<std::string> raw_blocks;
      if (j.contains("blocks")) {
        raw_blocks = j.at("blocks").get<std::vector<std::string>>();
      } else {
        const auto text = j.at("text").get<std::string>();
        if (kind == BlockKind::sentence) {
          raw_blocks = split_sentences(text);
        } else {
          size_t start = 0, pos;
          while ((pos = text.find("\n\n", start)) != std::string::npos) {
            raw_blocks.push_back(text.substr(start, pos - start));
            start = pos + 2;
          }
          raw_blocks.push_back(text.substr(start));
        }
      }
      for (const auto& rb : raw_blocks) {
        TextBlock b = make_block(rb);
        if (!b.tokens.empty()) doc.blocks.push_back(std::move(b));
      }
    } catch (const json::exception&) {
      res.errors.push_back("line " + std::to_string(lineno) + ": malformed corpus record");
      continue;
    }
    if (doc.blocks.empty()) {
      ++res.skipped_empty;
      continue;
    }
    res.docs.push_back(std::move(doc));
  }
  return res;
}

Document truncate(const Document& doc, size_t max_blocks, size_t max_tokens_per_block,
                  size_t max_total_tokens) {
  if (max_blocks == 0 || max_tokens_per_block == 0 || max_total_tokens == 0)
    throw ConfigError("truncation limits must be positive");
  Document out;
  out.id = doc.id;
  size_t total = 0;
  for (const auto& block : doc.blocks) {
    if (out.blocks.size() >= max_blocks) break;
    TextBlock b = block;
    if (b.tokens.size() > max_tokens_per_block) b.tokens.resize(max_tokens_per_block);
    if (total + b.tokens.size() > max_total_tokens) {
      // Whole trailing blocks are dropped rather than split. The first block
      // is kept (trimmed if needed) so the document stays non-empty.
      if (out.blocks.empty()) {
        b.tokens.resize(max_total_tokens);
        out.blocks.push_back(std::move(b));
      }
      break;
    }
    total += b.tokens.size();
    out.blocks.push_back(std::move(b));
  }
  return out;
}

EncodedDoc encode_ids(const Document& doc, const Vocabulary& vocab) {
  EncodedDoc out;
  out.id = doc.id;
  out.blocks.reserve(doc.blocks.size());
  for (const auto& block : doc.blocks) {
    EncodedBlock eb;
    eb.token_ids.reserve(block.tokens.size());
    eb.char_ids.reserve(block.tokens.size());
    for (const auto& tok : block.tokens) {
      eb.token_ids.push_back(vocab.id(tok));
      eb.char_ids.push_back(encode_chars(tok));
    }
    out.blocks.push_back(std::move(eb));
  }
  return out;
}

}  // namespace docenc
