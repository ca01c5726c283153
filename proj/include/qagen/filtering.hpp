#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qagen/corpus.hpp"
#include "qagen/generation.hpp"

namespace qagen {

enum class PoolingRule { sum, avg };

std::string to_string(PoolingRule p);
PoolingRule pooling_from_string(const std::string& s);

/// QAGen/QAGen2S: answer segment only. AQGen: answer segment plus question
/// segment (avg pools each segment separately, then adds). QGenBaseline has
/// no generated answer and pools the question segment.
/// Throws ScoringError naming the pair when a needed segment is empty.
double lm_score(const GeneratedPair& pair, GenerationMode mode, PoolingRule pooling);

struct GroupSize {
  std::string passage_id;
  std::size_t input = 0;
  std::size_t kept = 0;
};

struct FilterReport {
  std::string stage;
  std::size_t input_count = 0;
  std::size_t kept_count = 0;
  std::map<std::string, std::size_t> drops;
  std::vector<GroupSize> groups;

  std::size_t dropped() const;
  /// kept + drops == input, and group sizes add up to the totals.
  bool reconciles() const;
};

struct FilterResult {
  std::vector<GeneratedPair> kept;
  FilterReport report;
};

/// Groups pairs by passage (first-appearance order), keeps the m best per
/// group by descending lm_score with lower sample_index winning ties.
FilterResult select_top_m(const std::vector<GeneratedPair>& pairs, std::size_t m,
                          PoolingRule pooling, GenerationMode mode);

/// Reading-comprehension model used for round-trip filtering.
class RCOracle {
 public:
  virtual ~RCOracle() = default;
  virtual std::string answer(std::string_view passage, std::string_view question) const = 0;
};

/// Keeps a pair iff the oracle's answer to its question exact-matches the
/// generated answer after answer normalization. Oracle exceptions and
/// unknown passages drop the pair under their own counter.
FilterResult round_trip_filter(const std::vector<GeneratedPair>& pairs, const Corpus& passages,
                               const RCOracle& oracle);

/// Passes every pair through unchanged.
FilterResult passthrough_filter(const std::vector<GeneratedPair>& pairs);

struct LexicalOracleOptions {
  std::size_t max_window = 10;
  std::size_t radius = 10;
};

/// Sliding-window lexical matcher. Among windows of 1..max_window passage
/// pieces that contain no question content word, neither start nor end
/// with punctuation, and hold at least one non-stopword, picks the one with the most distinct question content
/// words within `radius` pieces on either side; ties go to the shorter,
/// then leftmost window. Returns the window's surface text.
std::string lexical_oracle(std::string_view passage, std::string_view question,
                           const LexicalOracleOptions& options = {});

class LexicalOracle final : public RCOracle {
 public:
  explicit LexicalOracle(LexicalOracleOptions options = {}) : options_(options) {}
  std::string answer(std::string_view passage, std::string_view question) const override {
    return lexical_oracle(passage, question, options_);
  }

 private:
  LexicalOracleOptions options_;
};

bool is_stopword(std::string_view lowered);

}  // namespace qagen
