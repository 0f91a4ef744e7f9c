#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "docenc/corpus.hpp"

using namespace docenc;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& contents) {
    path = "test_corpus_tmp_" + std::to_string(reinterpret_cast<uintptr_t>(this)) + ".jsonl";
    std::ofstream f(path);
    f << contents;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

Document make_doc(std::vector<std::vector<std::string>> blocks) {
  Document d;
  d.id = "d";
  for (auto& b : blocks) d.blocks.push_back(TextBlock{std::move(b)});
  return d;
}

}  // namespace

TEST_CASE("tokenize splits whitespace and detaches punctuation") {
  CHECK(tokenize("a b") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize("dog.") == std::vector<std::string>{"dog", "."});
  CHECK(tokenize("(hi!)") == std::vector<std::string>{"(", "hi", "!", ")"});
  CHECK(tokenize("it's fine-ish") == std::vector<std::string>{"it's", "fine-ish"});
  CHECK(tokenize("  spaced\tout \n") == std::vector<std::string>{"spaced", "out"});
  CHECK(tokenize("...") == std::vector<std::string>{".", ".", "."});
}

TEST_CASE("split_sentences on terminal punctuation") {
  auto s = split_sentences("One two. Three? Four! five six");
  REQUIRE(s.size() == 4);
  CHECK(s[0] == "One two.");
  CHECK(s[1] == " Three?");
  CHECK(s[2] == " Four!");
  CHECK(s[3] == " five six");
  CHECK(split_sentences("No terminal here").size() == 1);
}

TEST_CASE("load_corpus parses blocks and filters empties") {
  TempFile f(R"({"id":"a","blocks":["a b","c"]})"
             "\n");
  auto res = load_corpus(f.path, BlockKind::sentence);
  REQUIRE(res.docs.size() == 1);
  CHECK(res.docs[0].blocks.size() == 2);
  CHECK(res.docs[0].blocks[0].tokens.size() == 2);
  CHECK(res.docs[0].blocks[1].tokens.size() == 1);
}

TEST_CASE("load_corpus drops empty blocks and skips empty documents") {
  TempFile f(R"({"id":"a","blocks":["x y","  ","z"]})"
             "\n"
             R"({"id":"empty","blocks":["   "]})"
             "\n");
  auto res = load_corpus(f.path, BlockKind::sentence);
  REQUIRE(res.docs.size() == 1);
  CHECK(res.docs[0].blocks.size() == 2);
  CHECK(res.skipped_empty == 1);
}

TEST_CASE("load_corpus reports malformed lines without aborting") {
  std::string contents;
  for (int i = 0; i < 100; ++i) {
    if (i == 42)
      contents += "{not json\n";
    else
      contents += R"({"id":"d)" + std::to_string(i) + R"(","blocks":["w w w"]})" + "\n";
  }
  TempFile f(contents);
  auto res = load_corpus(f.path, BlockKind::sentence);
  CHECK(res.docs.size() == 99);
  REQUIRE(res.errors.size() == 1);
  CHECK(res.errors[0].find("line 43") != std::string::npos);
}

TEST_CASE("load_corpus splits text records per block kind") {
  TempFile f(R"({"id":"t","text":"One two. Three four."})"
             "\n");
  auto res = load_corpus(f.path, BlockKind::sentence);
  REQUIRE(res.docs.size() == 1);
  CHECK(res.docs[0].blocks.size() == 2);

  TempFile g("{\"id\":\"p\",\"text\":\"para one\\n\\npara two\"}\n");
  auto res2 = load_corpus(g.path, BlockKind::paragraph);
  REQUIRE(res2.docs.size() == 1);
  CHECK(res2.docs[0].blocks.size() == 2);
}

TEST_CASE("build_vocab keeps most frequent with reserved entries") {
  auto docs = std::vector<Document>{make_doc({{"a", "a", "b"}})};
  Vocabulary v = Vocabulary::build(docs, 5);
  CHECK(v.size() == 5);
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
  CHECK(v.token(Vocabulary::kMask) == "<mask>");
  CHECK(v.id("a") == 3);  // most frequent first
  CHECK(v.id("b") == 4);

  Vocabulary small = Vocabulary::build(docs, 4);
  CHECK(small.size() == 4);
  CHECK(small.id("a") == 3);
  CHECK(small.id("b") == Vocabulary::kUnk);  // excluded: lower frequency
  CHECK(small.id("zzz") == Vocabulary::kUnk);

  CHECK_THROWS_AS(Vocabulary::build(docs, 3), ConfigError);
  CHECK_THROWS_AS(Vocabulary::build({}, 10), DataError);
}

TEST_CASE("vocab frequency ties break lexicographically") {
  auto docs = std::vector<Document>{make_doc({{"zeta", "alpha", "mid", "mid"}})};
  Vocabulary v = Vocabulary::build(docs, 5);
  CHECK(v.id("mid") == 3);    // frequency 2
  CHECK(v.id("alpha") == 4);  // tie at 1: lexicographic
  CHECK(v.id("zeta") == Vocabulary::kUnk);
}

TEST_CASE("vocab build is deterministic and round-trips through lines") {
  auto docs = std::vector<Document>{make_doc({{"c", "b", "a", "b", "c", "c"}})};
  Vocabulary v1 = Vocabulary::build(docs, 10);
  Vocabulary v2 = Vocabulary::build(docs, 10);
  CHECK(v1.to_lines() == v2.to_lines());
  Vocabulary v3 = Vocabulary::from_lines(v1.to_lines());
  CHECK(v3.size() == v1.size());
  CHECK(v3.id("c") == v1.id("c"));
}

TEST_CASE("truncate honors the three limits") {
  SUBCASE("within limits unchanged") {
    Document d = make_doc({{"a", "b"}, {"c"}});
    Document t = truncate(d, 20, 20, 400);
    CHECK(t.blocks.size() == 2);
    CHECK(t.blocks[0].tokens.size() == 2);
  }
  SUBCASE("block count cap") {
    std::vector<std::vector<std::string>> blocks(80, {"w"});
    Document t = truncate(make_doc(std::move(blocks)), 75, 75, 5000);
    CHECK(t.blocks.size() == 75);
  }
  SUBCASE("total cap drops whole trailing blocks") {
    std::vector<std::string> big(3000, "w");
    Document t = truncate(make_doc({big, big}), 75, 5000, 5000);
    CHECK(t.blocks.size() == 1);
    CHECK(t.blocks[0].tokens.size() == 3000);
  }
  SUBCASE("per-block token cap") {
    std::vector<std::string> long_block(30, "w");
    Document t = truncate(make_doc({long_block}), 20, 20, 400);
    CHECK(t.blocks[0].tokens.size() == 20);
  }
  CHECK_THROWS_AS(truncate(make_doc({{"a"}}), 0, 1, 1), ConfigError);
}

TEST_CASE("truncate property: all limits hold simultaneously") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<std::string>> blocks;
    const size_t nb = 1 + rng.index(30);
    for (size_t b = 0; b < nb; ++b)
      blocks.push_back(std::vector<std::string>(1 + rng.index(40), "w"));
    const size_t max_b = 1 + rng.index(25);
    const size_t max_t = 1 + rng.index(30);
    const size_t max_total = max_t + rng.index(200);  // per-block cap <= total cap
    Document t = truncate(make_doc(std::move(blocks)), max_b, max_t, max_total);
    CHECK(t.blocks.size() <= max_b);
    CHECK(t.blocks.size() >= 1);
    size_t total = 0;
    for (const auto& b : t.blocks) {
      CHECK(b.tokens.size() <= max_t);
      total += b.tokens.size();
    }
    CHECK(total <= max_total);
  }
}

TEST_CASE("encode_ids maps tokens, unknowns, and characters") {
  auto docs = std::vector<Document>{make_doc({{"known", "word"}})};
  Vocabulary v = Vocabulary::build(docs, 10);
  Document d = make_doc({{"known", "mystery"}});
  EncodedDoc e = encode_ids(d, v);
  CHECK(e.blocks[0].token_ids[0] == v.id("known"));
  CHECK(e.blocks[0].token_ids[1] == Vocabulary::kUnk);
  // Characters still encode the unknown token's spelling.
  CHECK(e.blocks[0].char_ids[1].size() == 7);
  CHECK(e.blocks[0].char_ids[1][0] == 'm' - 0x20);

  // Round trip for in-vocab text.
  EncodedDoc known = encode_ids(make_doc({{"known", "word"}}), v);
  for (size_t t = 0; t < 2; ++t) {
    const std::string& tok = v.token(known.blocks[0].token_ids[t]);
    CHECK(tok == docs[0].blocks[0].tokens[t]);
  }
}

TEST_CASE("encode_ids never emits out-of-range indices") {
  Rng rng(9);
  auto docs = std::vector<Document>{make_doc({{"aa", "bb", "cc", "dd", "ee"}})};
  Vocabulary v = Vocabulary::build(docs, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> toks;
    for (size_t i = 0; i < 1 + rng.index(8); ++i) {
      std::string t;
      for (size_t c = 0; c < 1 + rng.index(6); ++c)
        t += static_cast<char>(rng.index(96) + 0x18);  // some outside the charset
      toks.push_back(t);
    }
    EncodedDoc e = encode_ids(make_doc({toks}), v);
    for (const auto& b : e.blocks) {
      for (int id : b.token_ids) {
        CHECK(id >= 0);
        CHECK(static_cast<size_t>(id) < v.size());
      }
      for (const auto& cs : b.char_ids)
        for (int c : cs) {
          CHECK(c >= 0);
          CHECK(c < chars::kTableRows);
        }
    }
  }
}

TEST_CASE("mask token maps to reserved id and mask character") {
  auto docs = std::vector<Document>{make_doc({{"w"}})};
  Vocabulary v = Vocabulary::build(docs, 5);
  CHECK(v.id(kMaskToken) == Vocabulary::kMask);
  auto cs = encode_chars(kMaskToken);
  REQUIRE(cs.size() == 1);
  CHECK(cs[0] == chars::kMaskChar);
}
