#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "docenc/common.hpp"

namespace docenc {

struct TextBlock {
  std::vector<std::string> tokens;
};

struct Document {
  std::string id;
  std::vector<TextBlock> blocks;
  size_t total_tokens() const;
};

enum class BlockKind { sentence, paragraph };

// Character-level encoding for the char-CNN. The charset is printable ASCII
// plus an out-of-charset placeholder (96 symbols); two extra internal ids
// exist for the mask symbol and convolution padding.
namespace chars {
inline constexpr int kCharsetSize = 96;
inline constexpr int kPlaceholder = 95;
inline constexpr int kMaskChar = 96;
inline constexpr int kPadChar = 97;
inline constexpr int kTableRows = 98;
}  // namespace chars

// Token string standing in for a masked-out word. Maps to Vocabulary::kMask
// and its character sequence is the single reserved mask character, so a
// masked position carries no trace of the original spelling.
inline const std::string kMaskToken = "\x01";

std::vector<int> encode_chars(const std::string& token);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kReserved = 3;

  // The max_size-3 most frequent tokens plus reserved entries.
  // Frequency ties break lexicographically.
  static Vocabulary build(const std::vector<Document>& corpus, size_t max_size);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  size_t size() const { return tokens_.size(); }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  // One non-reserved token per line, the vocabulary-file format.
  std::string to_lines() const;
  static Vocabulary from_lines(const std::string& lines);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  void insert(const std::string& tok);
};

// Whitespace tokenization with leading/trailing punctuation detached as
// separate tokens.
std::vector<std::string> tokenize(const std::string& text);
// Split on terminal punctuation (.!?) followed by whitespace.
std::vector<std::string> split_sentences(const std::string& text);

struct LoadResult {
  std::vector<Document> docs;
  std::vector<std::string> errors;  // one entry per malformed record, with line number
  size_t skipped_empty = 0;
};

// Line-JSON corpus: {"id": ..., "blocks": [...]} or {"id": ..., "text": ...}.
LoadResult load_corpus(const std::string& path, BlockKind kind);

Document truncate(const Document& doc, size_t max_blocks, size_t max_tokens_per_block,
                  size_t max_total_tokens);

struct EncodedBlock {
  std::vector<int> token_ids;
  std::vector<std::vector<int>> char_ids;
  size_t size() const { return token_ids.size(); }
};

struct EncodedDoc {
  std::string id;
  std::vector<EncodedBlock> blocks;
  size_t total_tokens() const;
};

EncodedDoc encode_ids(const Document& doc, const Vocabulary& vocab);

}  // namespace docenc
