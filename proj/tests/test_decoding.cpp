#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qagen/decoding.hpp"
#include "qagen/error.hpp"

using namespace qagen;

namespace {
// Brute-force truncation oracle: sort by (-p, id), keep k, then the shortest
// prefix whose renormalized mass reaches p.
std::vector<double> oracle_truncate(const std::vector<double>& probs, std::size_t k, double p) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return probs[a] > probs[b]; });
  order.resize(std::min(k, order.size()));
  double top = 0.0;
  for (auto i : order) top += probs[i];
  std::vector<double> out(probs.size(), 0.0);
  double acc = 0.0, kept = 0.0;
  for (auto i : order) {
    if (probs[i] == 0.0) break;
    out[i] = probs[i];
    kept += probs[i];
    acc += probs[i] / top;
    if (acc >= p - 1e-12) break;
  }
  for (auto& x : out) x /= kept;
  return out;
}
}  // namespace

TEST_CASE("top-k keeps the lowest ids among ties") {
  const Distribution d({0.25, 0.25, 0.25, 0.25});
  const auto t = topk_truncate(d, 2);
  CHECK(t.probs == std::vector<double>{0.5, 0.5, 0.0, 0.0});
  CHECK(rank_tokens(Distribution({0.1, 0.4, 0.1, 0.4})) == std::vector<TokenId>{1, 3, 0, 2});
}

TEST_CASE("nucleus keeps the crossing token") {
  const auto t = nucleus_truncate(Distribution({0.5, 0.3, 0.15, 0.05}), 0.7);
  CHECK(t[0] == doctest::Approx(0.5 / 0.8));
  CHECK(t[1] == doctest::Approx(0.3 / 0.8));
  CHECK(t[2] == 0.0);
  CHECK(nucleus_truncate(Distribution({0.5, 0.3, 0.2}), 0.8)[2] == 0.0);  // exact mass stops
}

TEST_CASE("top-k + nucleus matches the brute-force oracle") {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> w(2 + rng.below(30));
    for (auto& x : w) x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    w[0] += 0.01;
    const Distribution d = Distribution::normalized(w);
    DecodeConfig cfg;
    cfg.k = 1 + rng.below(25);
    cfg.p = 0.05 + 0.95 * rng.uniform();
    const auto got = topk_nucleus(d, cfg);
    const auto want = oracle_truncate(d.probs, cfg.k, cfg.p);
    for (std::size_t j = 0; j < w.size(); ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
}

TEST_CASE("nucleus on the original distribution keeps fewer tokens") {
  const Distribution d({0.4, 0.3, 0.2, 0.1});
  DecodeConfig cfg;
  cfg.k = 2;
  cfg.p = 0.55;
  CHECK(topk_nucleus(d, cfg)[1] == 0.0);  // 0.4/0.7 >= 0.55 already
  cfg.nucleus_on_original = true;
  CHECK(topk_nucleus(d, cfg)[1] > 0.0);  // 0.4 < 0.55 on the original scale
}

TEST_CASE("sampling never draws zero-probability tokens") {
  Rng rng(5);
  const Distribution d({0.0, 0.5, 0.0, 0.5, 0.0});
  for (int i = 0; i < 10000; ++i) {
    const TokenId t = sample_token(d, rng);
    CHECK((t == 1 || t == 3));
  }
}

TEST_CASE("greedy, beam and forced prefixes") {
  ScriptedLM lm(6);
  lm.set_any_context({}, Distribution({0, 0, 0.1, 0, 0.5, 0.4}));
  lm.set_any_context({4}, Distribution({0, 0, 0.4, 0, 0.3, 0.3}));
  lm.set_any_context({5}, Distribution({0, 0, 0.9, 0, 0.05, 0.05}));
  const auto g = greedy_decode(lm, TokenSequence{}, 4);
  CHECK(g.ids == TokenSequence{4, 2});
  CHECK(g.total_logprob == doctest::Approx(std::log(0.5 * 0.4)));
  const auto b = beam_search(lm, TokenSequence{}, 2, 4);
  REQUIRE(!b.empty());
  CHECK(b[0].ids == TokenSequence{5, 2});  // 0.36 beats 0.2
  CHECK(beam_search(lm, TokenSequence{}, 1, 4)[0].ids == g.ids);

  const auto f = greedy_decode(lm, TokenSequence{}, 4, TokenSequence{5});
  CHECK(f.ids == TokenSequence{5, 2});
  CHECK(f.step_logprobs[0] == doctest::Approx(std::log(0.4)));
  const auto capped = greedy_decode(lm, TokenSequence{}, 1);
  CHECK(capped.ids.size() == 1);
}

TEST_CASE("step logprobs come from the untruncated model") {
  ScriptedLM lm(4);
  lm.set_any_context({}, Distribution({0.1, 0.6, 0.3, 0.0}));
  DecodeConfig cfg;
  cfg.k = 1;
  cfg.max_len = 1;
  Rng rng(1);
  const auto s = sample_sequence(lm, TokenSequence{}, cfg, rng);
  CHECK(s.ids == TokenSequence{1});
  CHECK(s.step_logprobs[0] == doctest::Approx(std::log(0.6)));
}

TEST_CASE("invalid decode configs") {
  DecodeConfig c;
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.p = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.p = 1.5;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK(strategy_from_string(to_string(Strategy::beam)) == Strategy::beam);
  CHECK_THROWS_AS(strategy_from_string("viterbi"), UsageError);
}
