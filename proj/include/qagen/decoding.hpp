#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qagen/lm.hpp"
#include "qagen/rng.hpp"

namespace qagen {

enum class Strategy { greedy, beam, topk_nucleus };

struct DecodeConfig {
  Strategy strategy = Strategy::topk_nucleus;
  std::size_t k = 20;
  double p = 0.95;
  std::size_t beam_width = 5;
  std::size_t max_len = 98;
  std::uint64_t seed = 0;
  /// Measure the nucleus mass on the original distribution instead of the
  /// renormalized top-k one.
  bool nucleus_on_original = false;

  /// Throws UsageError on k == 0, beam_width == 0, max_len == 0 or p outside (0, 1].
  void validate() const;
};

struct DecodedSequence {
  TokenSequence ids;
  /// log p(ids[i] | ids[..i], context) under the untruncated model.
  std::vector<double> step_logprobs;
  double total_logprob = 0.0;
};

/// Tokens ordered by descending probability, lowest id first among ties.
std::vector<TokenId> rank_tokens(const Distribution& d);

/// Keeps the k most probable tokens (lowest id wins ties) and renormalizes.
Distribution topk_truncate(const Distribution& d, std::size_t k);

/// Keeps the shortest descending-probability prefix whose mass reaches p,
/// including the token that crosses p, and renormalizes.
Distribution nucleus_truncate(const Distribution& d, double p);

/// Top-k then nucleus, per cfg.
Distribution topk_nucleus(const Distribution& d, const DecodeConfig& cfg);

/// Inverse-CDF draw; never returns a zero-probability token.
TokenId sample_token(const Distribution& d, Rng& rng);

/// Top-k + nucleus ancestral sampling. `forced_prefix` tokens (control
/// codes) are emitted first and scored but not sampled; they count towards
/// max_len. Stops after EOS or at max_len tokens.
DecodedSequence sample_sequence(const ConditionalLM& lm, std::span<const TokenId> context,
                                const DecodeConfig& cfg, Rng& rng,
                                std::span<const TokenId> forced_prefix = {});

DecodedSequence greedy_decode(const ConditionalLM& lm, std::span<const TokenId> context,
                              std::size_t max_len, std::span<const TokenId> forced_prefix = {});

/// Length-unnormalized beam search. Hypotheses ending in EOS are retired and
/// compete with live ones for the `width` slots; results are sorted by
/// descending total_logprob, then lexicographic ids.
std::vector<DecodedSequence> beam_search(const ConditionalLM& lm,
                                         std::span<const TokenId> context, std::size_t width,
                                         std::size_t max_len,
                                         std::span<const TokenId> forced_prefix = {});

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

}  // namespace qagen
