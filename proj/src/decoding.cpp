#include "qagen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qagen/error.hpp"

namespace qagen {

namespace {

// Slack for cumulative-mass comparisons; sums like 0.5 + 0.3 + 0.15 land a
// few ulps below 0.95 in binary floating point.
constexpr double kMassSlack = 1e-12;

Distribution keep_only(const Distribution& d, std::span<const TokenId> kept) {
  std::vector<double> out(d.size(), 0.0);
  double total = 0.0;
  for (TokenId t : kept) total += d[static_cast<std::size_t>(t)];
  for (TokenId t : kept) out[static_cast<std::size_t>(t)] = d[static_cast<std::size_t>(t)] / total;
  return Distribution(std::move(out));
}

// Shortest prefix of `ranked` whose mass under `mass` reaches p.
std::size_t nucleus_size(const Distribution& mass, std::span<const TokenId> ranked, double p) {
  double cum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    cum += mass[static_cast<std::size_t>(ranked[i])];
    if (cum >= p - kMassSlack) return i + 1;
  }
  return ranked.size();
}

std::vector<TokenId> support_prefix(const Distribution& d, const std::vector<TokenId>& ranked,
                                    std::size_t n) {
  std::vector<TokenId> kept;
  for (std::size_t i = 0; i < ranked.size() && kept.size() < n; ++i) {
    if (d[static_cast<std::size_t>(ranked[i])] > 0.0) kept.push_back(ranked[i]);
  }
  return kept;
}

struct Scored {
  TokenSequence ids;
  std::vector<double> logprobs;
  double total = 0.0;
  bool done = false;
};

bool better(const Scored& a, const Scored& b) {
  if (a.total != b.total) return a.total > b.total;
  return std::lexicographical_compare(a.ids.begin(), a.ids.end(), b.ids.begin(), b.ids.end());
}

DecodedSequence finish(Scored s) {
  DecodedSequence out;
  out.ids = std::move(s.ids);
  out.step_logprobs = std::move(s.logprobs);
  out.total_logprob = std::accumulate(out.step_logprobs.begin(), out.step_logprobs.end(), 0.0);
  return out;
}

// Scores the forced prefix tokens under the model.
Scored start(const ConditionalLM& lm, const EncoderState& state,
             std::span<const TokenId> forced_prefix, std::size_t max_len) {
  Scored s;
  for (TokenId t : forced_prefix) {
    const Distribution d = lm.next_distribution(state, s.ids);
    s.logprobs.push_back(safe_log(d[static_cast<std::size_t>(t)]));
    s.total += s.logprobs.back();
    s.ids.push_back(t);
  }
  s.done = s.ids.size() >= max_len || (!s.ids.empty() && s.ids.back() == special::kEos);
  return s;
}

}  // namespace

void DecodeConfig::validate() const {
  if (k == 0) throw UsageError("decode: k must be >= 1");
  if (beam_width == 0) throw UsageError("decode: beam_width must be >= 1");
  if (max_len == 0) throw UsageError("decode: max_len must be >= 1");
  if (!(p > 0.0 && p <= 1.0)) throw UsageError("decode: p must be in (0, 1]");
}

std::vector<TokenId> rank_tokens(const Distribution& d) {
  std::vector<TokenId> ids(d.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
    return d[static_cast<std::size_t>(a)] > d[static_cast<std::size_t>(b)];
  });
  return ids;
}

Distribution topk_truncate(const Distribution& d, std::size_t k) {
  if (k >= d.size()) return d;
  const auto ranked = rank_tokens(d);
  return keep_only(d, support_prefix(d, ranked, k));
}

Distribution nucleus_truncate(const Distribution& d, double p) {
  const auto ranked = rank_tokens(d);
  const std::size_t n = nucleus_size(d, ranked, p);
  return keep_only(d, support_prefix(d, ranked, n));
}

Distribution topk_nucleus(const Distribution& d, const DecodeConfig& cfg) {
  if (!cfg.nucleus_on_original) return nucleus_truncate(topk_truncate(d, cfg.k), cfg.p);
  const auto ranked = rank_tokens(d);
  const auto topk = support_prefix(d, ranked, cfg.k);
  const std::size_t n = nucleus_size(d, topk, cfg.p);
  return keep_only(d, std::span<const TokenId>(topk).first(n));
}

TokenId sample_token(const Distribution& d, Rng& rng) {
  double total = 0.0;
  for (double v : d.probs) total += v;
  const double u = rng.uniform() * total;
  double cum = 0.0;
  TokenId last = -1;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    cum += d[i];
    last = static_cast<TokenId>(i);
    if (u < cum) return last;
  }
  return last;
}

DecodedSequence sample_sequence(const ConditionalLM& lm, std::span<const TokenId> context,
                                const DecodeConfig& cfg, Rng& rng,
                                std::span<const TokenId> forced_prefix) {
  cfg.validate();
  const auto state = lm.encode(context);
  Scored s = start(lm, *state, forced_prefix, cfg.max_len);
  while (!s.done) {
    const Distribution d = lm.next_distribution(*state, s.ids);
    const TokenId t = sample_token(topk_nucleus(d, cfg), rng);
    s.logprobs.push_back(safe_log(d[static_cast<std::size_t>(t)]));
    s.ids.push_back(t);
    s.done = t == special::kEos || s.ids.size() >= cfg.max_len;
  }
  return finish(std::move(s));
}

DecodedSequence greedy_decode(const ConditionalLM& lm, std::span<const TokenId> context,
                              std::size_t max_len, std::span<const TokenId> forced_prefix) {
  if (max_len == 0) throw UsageError("decode: max_len must be >= 1");
  const auto state = lm.encode(context);
  Scored s = start(lm, *state, forced_prefix, max_len);
  while (!s.done) {
    const Distribution d = lm.next_distribution(*state, s.ids);
    std::size_t best = 0;
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (d[i] > d[best]) best = i;
    }
    s.logprobs.push_back(safe_log(d[best]));
    s.ids.push_back(static_cast<TokenId>(best));
    s.done = s.ids.back() == special::kEos || s.ids.size() >= max_len;
  }
  return finish(std::move(s));
}

std::vector<DecodedSequence> beam_search(const ConditionalLM& lm,
                                         std::span<const TokenId> context, std::size_t width,
                                         std::size_t max_len,
                                         std::span<const TokenId> forced_prefix) {
  if (width == 0) throw UsageError("decode: beam_width must be >= 1");
  if (max_len == 0) throw UsageError("decode: max_len must be >= 1");
  const auto state = lm.encode(context);
  std::vector<Scored> beam{start(lm, *state, forced_prefix, max_len)};

  auto live = [](const std::vector<Scored>& b) {
    return std::any_of(b.begin(), b.end(), [](const Scored& s) { return !s.done; });
  };
  while (live(beam)) {
    std::vector<Scored> candidates;
    for (auto& hyp : beam) {
      if (hyp.done) {
        candidates.push_back(std::move(hyp));
        continue;
      }
      const Distribution d = lm.next_distribution(*state, hyp.ids);
      for (std::size_t t = 0; t < d.size(); ++t) {
        if (d[t] <= 0.0) continue;
        Scored next = hyp;
        next.logprobs.push_back(std::log(d[t]));
        next.total += next.logprobs.back();
        next.ids.push_back(static_cast<TokenId>(t));
        next.done = t == static_cast<std::size_t>(special::kEos) || next.ids.size() >= max_len;
        candidates.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), better);
    candidates.resize(keep);
    beam = std::move(candidates);
  }
  std::sort(beam.begin(), beam.end(), better);
  std::vector<DecodedSequence> out;
  out.reserve(beam.size());
  for (auto& s : beam) out.push_back(finish(std::move(s)));
  return out;
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::greedy:
      return "greedy";
    case Strategy::beam:
      return "beam";
    case Strategy::topk_nucleus:
      return "topk_nucleus";
  }
  return "topk_nucleus";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "greedy") return Strategy::greedy;
  if (s == "beam") return Strategy::beam;
  if (s == "topk_nucleus" || s == "topk+nucleus") return Strategy::topk_nucleus;
  throw UsageError("unknown decoding strategy '" + s + "'");
}

}  // namespace qagen
