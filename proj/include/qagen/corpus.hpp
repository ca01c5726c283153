#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace qagen {

struct Passage {
  std::string id;
  std::string text;
  std::string domain;
  std::size_t token_count = 0;  // text::count_pieces(text)
};

/// One (context, question, answer) triple. `answer_char_start` is a
/// code-point offset into the passage text.
struct LabeledExample {
  std::string id;  // question id (SQuAD `id`, MRQA `qid`)
  std::string passage_id;
  std::string question;
  std::string answer_text;
  std::size_t answer_char_start = 0;
};

enum class CorpusFormat { squad, mrqa, synthetic };

/// Passages plus (possibly no) labeled examples. Immutable once built;
/// construction validates unique passage ids and example references.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Passage> passages, std::vector<LabeledExample> examples,
         CorpusFormat origin);

  const std::vector<Passage>& passages() const { return passages_; }
  const std::vector<LabeledExample>& examples() const { return examples_; }
  CorpusFormat format_origin() const { return origin_; }

  const Passage* find(const std::string& passage_id) const;
  const Passage& at(const std::string& passage_id) const;

 private:
  std::vector<Passage> passages_;
  std::vector<LabeledExample> examples_;
  CorpusFormat origin_ = CorpusFormat::synthetic;
  std::unordered_map<std::string, std::size_t> index_;
};

Passage make_passage(std::string id, std::string text, std::string domain = {});

/// SQuAD 1.1 JSON. Paragraphs may carry an optional `passage_id`; otherwise
/// ids are "d<doc index>-p<paragraph index>". First answer per qa.
Corpus load_squad(const std::filesystem::path& path);
Corpus parse_squad(const std::string& json_text, const std::string& source = "<memory>");

/// MRQA JSONL: header line, then records with `context` and `qas`.
/// `char_spans` are inclusive [start, end]. First detected answer per qa.
Corpus load_mrqa(const std::filesystem::path& path);
Corpus parse_mrqa(const std::string& jsonl_text, const std::string& source = "<memory>");

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

struct SelectionResult {
  std::vector<Passage> passages;
  bool undersupplied = false;  // fewer eligible passages than requested
  std::size_t eligible = 0;
};

/// Drops passages shorter than `min_tokens` or whose whitespace-collapsed
/// text is in `exclude`, samples `count` of the rest uniformly without
/// replacement under `seed`, and truncates each to `max_tokens`.
SelectionResult select_passages(const Corpus& corpus, std::size_t count, std::size_t min_tokens,
                                std::size_t max_tokens,
                                const std::unordered_set<std::string>& exclude,
                                std::uint64_t seed);

/// Whitespace-collapsed passage texts, for use as a select_passages exclude set.
std::unordered_set<std::string> exclusion_set(const Corpus& corpus);

struct GeneratedPair;

enum class SyntheticFormat { squad, mrqa };

/// Writes kept pairs as a corpus file that load_squad/load_mrqa read back.
/// Answer offsets are the first occurrence of the answer in the passage.
/// Throws ValidationError for an uncontained pair or unknown passage.
void write_synthetic(const std::vector<GeneratedPair>& pairs, const Corpus& passages,
                     const std::filesystem::path& path, SyntheticFormat format);

/// Serialized forms, in the exact bytes write_synthetic/write_corpus emit.
std::string squad_json(const Corpus& corpus);
std::string mrqa_jsonl(const Corpus& corpus);

/// Converts kept pairs into a Corpus (format_origin = synthetic).
Corpus synthetic_corpus(const std::vector<GeneratedPair>& pairs, const Corpus& passages);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path, SyntheticFormat format);

/// Union of both example sets in a seed-determined uniform shuffle.
/// Synthetic passage ids that collide with supervised ones get a "syn:" prefix.
Corpus mix_datasets(const Corpus& synthetic, const Corpus& supervised, std::uint64_t seed);

std::string to_string(CorpusFormat f);
CorpusFormat corpus_format_from_string(const std::string& s);

}  // namespace qagen
