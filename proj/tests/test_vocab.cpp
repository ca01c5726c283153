#include <doctest.h>

#include <string>
#include <vector>

#include "qagen/error.hpp"
#include "qagen/vocab.hpp"

using namespace qagen;

TEST_CASE("specials come first") {
  const Vocabulary v;
  CHECK(v.token(special::kPad) == "<pad>");
  CHECK(v.token(special::kBos) == "<s>");
  CHECK(v.token(special::kEos) == "</s>");
  CHECK(v.token(special::kSep) == "<sep>");
  CHECK(v.token(special::kCodeQ) == "<q>");
  CHECK(v.token(special::kCodeA) == "<a>");
  CHECK(v.find("<0x41>").has_value());
  CHECK(v.find("##<0xFF>").has_value());
  CHECK_THROWS_AS(Vocabulary({"a", "b"}), ValidationError);
}

TEST_CASE("build_vocab ranks words by frequency") {
  const std::vector<std::string> texts = {"b b b a a c", "a b"};
  const auto freq = word_frequencies(texts);
  REQUIRE(freq.size() == 3);
  CHECK(freq[0].first == "b");
  CHECK(freq[1].first == "a");
  const Vocabulary v = build_vocab(texts, 2);
  CHECK(v.token(special::kCount) == "b");
  CHECK(v.token(special::kCount + 1) == "a");
  CHECK(v.find("c").has_value());
}

TEST_CASE("tokenize and detokenize round-trip lowercase text") {
  const std::vector<std::string> texts = {"the capital of france is paris.", "who wrote it, and when?"};
  const Vocabulary v = build_vocab(texts, 100);
  for (const auto& t : texts) CHECK(detokenize(tokenize(t, v), v) == t);
  CHECK(detokenize(tokenize("The Capital", v), v) == "the capital");
}

TEST_CASE("unknown words are spelled") {
  const Vocabulary v = build_vocab(std::vector<std::string>{"paris"}, 10);
  const auto ids = tokenize("sap", v);
  REQUIRE(ids.size() == 3);
  CHECK(v.token(ids[0]) == "s");
  CHECK(v.token(ids[1]) == "##a");
  CHECK(detokenize(ids, v) == "sap");
  const auto bytes = tokenize("\xc3\xa9t\xc3\xa9", v);
  CHECK(v.token(bytes[0]) == "<0xC3>");
  CHECK(detokenize(bytes, v) == "\xc3\xa9t\xc3\xa9");
}

TEST_CASE("spans cover their source pieces") {
  const std::string text = "Paris, France";
  const Vocabulary v = build_vocab(std::vector<std::string>{text}, 10);
  const auto spans = tokenize_with_spans(text, v);
  REQUIRE(spans.size() == 3);
  CHECK(text.substr(spans[0].begin, spans[0].end - spans[0].begin) == "Paris");
  CHECK(text.substr(spans[2].begin, spans[2].end - spans[2].begin) == "France");
}
