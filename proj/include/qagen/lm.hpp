#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "qagen/vocab.hpp"

namespace qagen {

/// Normalized next-token probabilities over the vocabulary.
struct Distribution {
  std::vector<double> probs;

  Distribution() = default;
  explicit Distribution(std::vector<double> p) : probs(std::move(p)) {}

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  /// Sum within 1e-9 of one and no negative or non-finite entries.
  bool valid(double tol = 1e-9) const;

  static Distribution uniform(std::size_t n);
  static Distribution one_hot(std::size_t n, TokenId id);
  /// Scales `weights` to sum to one. Throws std::invalid_argument on a
  /// non-positive total.
  static Distribution normalized(std::vector<double> weights);
};

/// Model-specific result of encoding a context.
class EncoderState {
 public:
  virtual ~EncoderState() = default;
};

/// p(x_i | x_<i, c): a conditional LM over target prefixes given a context.
/// Implementations must be deterministic and side-effect free so a single
/// instance can serve any number of concurrent decoders.
class ConditionalLM {
 public:
  virtual ~ConditionalLM() = default;

  virtual std::size_t vocab_size() const = 0;

  virtual std::unique_ptr<EncoderState> encode(std::span<const TokenId> context) const = 0;

  /// Distribution of the token following `prefix`. The BOS start symbol is
  /// implicit and never part of `prefix`.
  virtual Distribution next_distribution(const EncoderState& state,
                                         std::span<const TokenId> prefix) const = 0;

  /// Longest context the encoder attends to; longer contexts are truncated
  /// at the tail by callers that build them.
  virtual std::size_t max_context_length() const {
    return std::numeric_limits<std::size_t>::max();
  }
};

/// Table-driven LM for tests and fixtures. Lookup order: exact
/// (context, prefix) entry, then a context-independent entry for the prefix,
/// then the uniform distribution.
class ScriptedLM final : public ConditionalLM {
 public:
  explicit ScriptedLM(std::size_t vocab_size);

  void set(const TokenSequence& context, const TokenSequence& prefix, Distribution d);
  void set_any_context(const TokenSequence& prefix, Distribution d);

  /// Scripts probability-one steps along `target` (each prefix maps to a
  /// one-hot distribution on the next token).
  void script_path(const TokenSequence& context, const TokenSequence& target);

  std::size_t vocab_size() const override { return vocab_size_; }
  std::unique_ptr<EncoderState> encode(std::span<const TokenId> context) const override;
  Distribution next_distribution(const EncoderState& state,
                                 std::span<const TokenId> prefix) const override;

 private:
  std::size_t vocab_size_;
  std::map<std::pair<TokenSequence, TokenSequence>, Distribution> table_;
  std::map<TokenSequence, Distribution> any_context_;
};

/// Per-token log-probabilities of `target` under `lm` given `context`.
/// Zero-probability tokens give -infinity. Throws std::invalid_argument on an
/// empty target.
std::vector<double> sequence_logprob(const ConditionalLM& lm, std::span<const TokenId> context,
                                     std::span<const TokenId> target);

double safe_log(double p);

}  // namespace qagen
