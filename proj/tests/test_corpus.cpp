#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "fixtures.hpp"
#include "qagen/corpus.hpp"
#include "qagen/error.hpp"
#include "qagen/generation.hpp"

using namespace qagen;

namespace {
const char* kSquad = R"({"version": "1.1", "data": [{"title": "T", "paragraphs": [
  {"context": "The café opened in 1901. It sold coffee.",
   "qas": [{"id": "a", "question": "When?", "answers": [{"text": "1901", "answer_start": 19}]},
           {"id": "b", "question": "Sold?", "answers": [{"text": "coffee", "answer_start": 33}]}]},
  {"context": "No questions here.", "qas": []}]}]})";
}

TEST_CASE("SQuAD parsing uses code-point offsets") {
  const Corpus c = parse_squad(kSquad);
  REQUIRE(c.passages().size() == 2);
  CHECK(c.passages()[0].id == "d0-p0");
  CHECK(c.passages()[0].token_count == 10);
  REQUIRE(c.examples().size() == 2);
  CHECK(c.examples()[0].answer_text == "1901");
  CHECK(c.examples()[0].answer_char_start == 19);
  CHECK(c.at("d0-p1").text == "No questions here.");
  CHECK_THROWS_AS(c.at("nope"), ValidationError);
}

TEST_CASE("SQuAD errors name the problem") {
  std::string bad = kSquad;
  bad.replace(bad.find("\"answer_start\": 19"), 18, "\"answer_start\": 20");
  CHECK_THROWS_WITH_AS(parse_squad(bad), doctest::Contains("a"), ValidationError);
  CHECK_THROWS_AS(parse_squad("{\"data\": 3}"), FormatError);
  CHECK_THROWS_AS(parse_squad("not json"), FormatError);
}

TEST_CASE("MRQA spans are inclusive") {
  const std::string jsonl =
      "{\"header\": {\"dataset\": \"NQ\"}}\n"
      "{\"context\": \"Rome is old.\", \"qas\": [{\"qid\": \"x\", \"question\": \"What?\", "
      "\"detected_answers\": [{\"text\": \"Rome\", \"char_spans\": [[0, 3]]}]}]}\n";
  const Corpus c = parse_mrqa(jsonl);
  REQUIRE(c.examples().size() == 1);
  CHECK(c.examples()[0].answer_text == "Rome");
  CHECK(c.passages()[0].id == "NQ-1");
  CHECK(c.passages()[0].domain == "NQ");
  CHECK_THROWS_AS(parse_mrqa("{\"context\": \"x\", \"qas\": []}\n"), FormatError);
  std::string reversed = jsonl;
  reversed.replace(reversed.find("[[0, 3]]"), 8, "[[3, 0]]");
  CHECK_THROWS_AS(parse_mrqa(reversed), ValidationError);
}

TEST_CASE("serialized corpora read back identically") {
  const Corpus c = fixtures::capitals_corpus(12, 5);
  for (const Corpus& back : {parse_squad(squad_json(c)), parse_mrqa(mrqa_jsonl(c))}) {
    REQUIRE(back.passages().size() == c.passages().size());
    REQUIRE(back.examples().size() == c.examples().size());
    for (std::size_t i = 0; i < c.passages().size(); ++i) {
      CHECK(back.passages()[i].id == c.passages()[i].id);
      CHECK(back.passages()[i].text == c.passages()[i].text);
    }
    for (std::size_t i = 0; i < c.examples().size(); ++i) {
      CHECK(back.examples()[i].id == c.examples()[i].id);
      CHECK(back.examples()[i].answer_text == c.examples()[i].answer_text);
      CHECK(back.examples()[i].answer_char_start == c.examples()[i].answer_char_start);
    }
  }
}

TEST_CASE("select_passages properties") {
  const Corpus c = fixtures::capitals_corpus(60, 1);
  std::unordered_set<std::string> exclude = {text::collapse_whitespace(c.passages()[0].text)};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = select_passages(c, 25, 12, 16, exclude, seed);
    CHECK(r.passages.size() == std::min<std::size_t>(25, r.eligible));
    std::set<std::string> ids;
    for (const auto& p : r.passages) {
      ids.insert(p.id);
      CHECK(p.id != "p0");
      CHECK(p.token_count <= 16);
      CHECK(c.at(p.id).token_count >= 12);
      CHECK(c.at(p.id).text.rfind(p.text, 0) == 0);  // truncation keeps a prefix
    }
    CHECK(ids.size() == r.passages.size());
    const auto again = select_passages(c, 25, 12, 16, exclude, seed);
    CHECK(again.passages.size() == r.passages.size());
    for (std::size_t i = 0; i < r.passages.size(); ++i) CHECK(again.passages[i].id == r.passages[i].id);
  }
  const auto all = select_passages(c, 1000, 0, 1000, {}, 3);
  CHECK(all.undersupplied);
  CHECK(all.passages.size() == 60);
  CHECK_THROWS_AS(select_passages(c, 1, 10, 5, {}, 0), UsageError);
}

TEST_CASE("synthetic pairs become a corpus") {
  const Corpus c = fixtures::capitals_corpus(3);
  GeneratedPair p;
  p.passage_id = "p1";
  p.question = "what is the capital of germany?";
  p.answer = "berlin";
  p.contained = true;
  const Corpus s = synthetic_corpus({p, p}, c);
  REQUIRE(s.examples().size() == 2);
  CHECK(s.examples()[0].id != s.examples()[1].id);
  CHECK(s.examples()[0].answer_char_start == *text::find_first(c.at("p1").text, "berlin"));
  p.answer = "paris";
  CHECK_THROWS_AS(synthetic_corpus({p}, c), ValidationError);

  const auto dir = std::filesystem::temp_directory_path() / "qagen-test-corpus";
  std::filesystem::create_directories(dir);
  p.answer = "berlin";
  write_synthetic({p}, c, dir / "s.jsonl", SyntheticFormat::mrqa);
  const Corpus back = load_mrqa(dir / "s.jsonl");
  CHECK(back.examples().at(0).answer_text == "berlin");
  std::filesystem::remove_all(dir);
}

TEST_CASE("mixing keeps every example once") {
  const Corpus a = fixtures::capitals_corpus(5, 1);
  const Corpus b = fixtures::capitals_corpus(7, 2);
  const Corpus m = mix_datasets(a, b, 11);
  CHECK(m.examples().size() == 12);
  std::set<std::string> pids;
  for (const auto& e : m.examples()) pids.insert(e.passage_id);
  CHECK(pids.size() == 12);  // colliding ids were prefixed
  CHECK(pids.count("syn:p0") == 1);
  const Corpus again = mix_datasets(a, b, 11);
  for (std::size_t i = 0; i < m.examples().size(); ++i) CHECK(again.examples()[i].id == m.examples()[i].id);
}
