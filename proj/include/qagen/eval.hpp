#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qagen/corpus.hpp"

namespace qagen {

/// SQuAD normalization: lowercase, drop ASCII punctuation, drop the
/// articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

int exact_match(std::string_view prediction, std::string_view gold);

/// Token-multiset F1 of normalized strings. Both empty -> 1, one empty -> 0.
double f1_score(std::string_view prediction, std::string_view gold);

struct EvalResult {
  double em = 0.0;  // fraction in [0, 1]
  double f1 = 0.0;
  std::size_t count = 0;

  double em_percent() const;  // rounded to 2 decimals
  double f1_percent() const;
};

/// Unweighted mean EM/F1 over the corpus examples. Throws ValidationError
/// listing qids that have no prediction.
EvalResult corpus_eval(const std::map<std::string, std::string>& predictions, const Corpus& gold);

/// Mean EM/F1 of parallel prediction/gold lists.
EvalResult evaluate_pairs(std::span<const std::string> predictions,
                          std::span<const std::string> golds);

struct BleuOptions {
  std::size_t max_order = 4;
  /// Add-one smoothing of the n > 1 precisions.
  bool smooth = false;
};

/// Corpus BLEU with uniform weights and brevity penalty over whitespace
/// tokens. Throws std::invalid_argument on empty or mismatched inputs.
double bleu(std::span<const std::string> candidates, std::span<const std::string> references,
            const BleuOptions& options = {});

struct ScoredItem {
  double lm_score = 0.0;
  double rc_f1 = 0.0;
};

struct BucketRow {
  std::size_t bucket_index = 0;
  double mean_score = 0.0;
  double mean_f1 = 0.0;
  std::size_t size = 0;
};

/// Sorts by descending lm_score (stable) and averages contiguous buckets of
/// `bucket_size`; the last bucket holds the remainder.
std::vector<BucketRow> bucket_analysis(std::span<const ScoredItem> items,
                                       std::size_t bucket_size = 200);

/// CSV with header row, LF line endings.
std::string buckets_csv(std::span<const BucketRow> rows);

}  // namespace qagen
