#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qagen/corpus.hpp"
#include "qagen/decoding.hpp"
#include "qagen/lm.hpp"

namespace qagen {

enum class GenerationMode { AQGen, QAGen, QAGen2S, QGenBaseline };

std::string to_string(GenerationMode m);
GenerationMode mode_from_string(const std::string& s);

/// A generated question/answer candidate and its model log-likelihoods.
/// Each logprob segment includes the token that terminates it (SEP or EOS).
struct GeneratedPair {
  std::string passage_id;
  std::string question;
  std::string answer;
  std::vector<double> answer_token_logprobs;
  std::vector<double> question_token_logprobs;
  bool contained = false;
  std::optional<std::size_t> answer_char_start;  // code points, first occurrence
  std::size_t sample_index = 0;

  bool operator==(const GeneratedPair&) const = default;
};

struct DropStats {
  std::size_t generated = 0;
  std::size_t dropped_uncontained = 0;
  std::size_t dropped_unparseable = 0;
  std::size_t deduplicated = 0;

  /// (uncontained + unparseable) / generated; 0 when nothing was generated.
  double drop_rate() const;
  DropStats& operator+=(const DropStats& other);
};

/// What the encoder sees for one decoder target: the passage, optionally
/// followed by SEP and `context_suffix`.
struct TargetSegment {
  TokenSequence context_suffix;
  TokenSequence target;
};

/// AQGen   -> {[a SEP q EOS]}
/// QAGen   -> {[q SEP a EOS]}
/// QAGen2S -> {[CODE_Q q EOS]} and {suffix q: [CODE_A a EOS]}
/// QGen    -> {suffix a: [q EOS]}
/// Throws ValidationError naming the position of a special token inside q or a.
std::vector<TargetSegment> build_target(GenerationMode mode, std::span<const TokenId> question,
                                        std::span<const TokenId> answer);

/// Encoder input for a segment: passage ids, then SEP + suffix when the
/// suffix is non-empty. The passage tail is cut so the result fits
/// `max_context`; the suffix is never cut.
TokenSequence build_context(std::span<const TokenId> passage,
                            std::span<const TokenId> suffix, std::size_t max_context);

/// (context, target) training pairs for one labeled example.
std::vector<std::pair<TokenSequence, TokenSequence>> training_pairs(
    GenerationMode mode, std::span<const TokenId> passage, std::span<const TokenId> question,
    std::span<const TokenId> answer, std::size_t max_context);

struct ParsedPair {
  TokenSequence question_ids;
  TokenSequence answer_ids;
  /// Positions (into the concatenated segment targets) of the question and
  /// answer logprob segments, terminators included.
  std::size_t question_begin = 0, question_end = 0;
  std::size_t answer_begin = 0, answer_end = 0;
};

enum class ParseFailure { missing_eos, trailing_tokens, missing_separator, missing_code, empty_field, too_long };

std::string to_string(ParseFailure f);

struct ParseResult {
  std::optional<ParsedPair> pair;
  std::optional<ParseFailure> failure;
  explicit operator bool() const { return pair.has_value(); }
};

struct SegmentLimits {
  std::size_t question_max = 64;
  std::size_t answer_max = 32;
};

/// Inverse of build_target for decoded output. Splits at the first SEP;
/// anything after the first SEP, further SEPs included, belongs to the
/// second field.
ParseResult parse_output(GenerationMode mode, std::span<const TargetSegment> segments,
                         const SegmentLimits& limits = {});

/// Single-pass convenience for AQGen/QAGen.
ParseResult parse_output(GenerationMode mode, std::span<const TokenId> tokens,
                         const SegmentLimits& limits = {});

/// Where the answer's tokens occur in the passage, with the surface text.
struct Containment {
  std::string surface;
  std::size_t char_start = 0;  // code points
};

/// First contiguous occurrence of `answer_ids` among the passage tokens.
std::optional<Containment> locate_answer(std::string_view passage_text,
                                         std::span<const TokenSpan> passage_tokens,
                                         std::span<const TokenId> answer_ids);

/// Case-sensitive substring test after collapsing whitespace in both strings.
bool contains_answer(std::string_view passage_text, std::string_view answer);

struct SpanProposal {
  std::string text;
  std::size_t char_start = 0;  // code points
  double score = 0.0;
};

/// Heuristic answer-span proposer: capitalized runs, numbers, and rare
/// content-word chunks of 1-5 pieces, ranked by inverse in-passage frequency.
std::vector<SpanProposal> propose_spans(const Passage& passage, std::size_t count,
                                        std::uint64_t seed);

struct GenerateOptions {
  SegmentLimits limits;
  bool deduplicate = true;
};

struct GenerateResult {
  std::vector<GeneratedPair> pairs;
  DropStats stats;
};

/// Draws `n` samples for one passage, parses them, drops unparseable and
/// uncontained pairs, and deduplicates exact (question, answer) repeats.
/// Random draws come from derive_stream(seed, passage.id, sample index).
GenerateResult generate(GenerationMode mode, const ConditionalLM& lm, const Vocabulary& vocab,
                        const Passage& passage, std::size_t n, const DecodeConfig& cfg,
                        std::uint64_t seed, const GenerateOptions& options = {});

}  // namespace qagen
