#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "qagen/lm.hpp"

using namespace qagen;

TEST_CASE("distribution validity") {
  CHECK(Distribution({0.25, 0.75}).valid());
  CHECK_FALSE(Distribution({0.5, 0.6}).valid());
  CHECK_FALSE(Distribution({-0.1, 1.1}).valid());
  CHECK(Distribution::uniform(4)[3] == doctest::Approx(0.25));
  CHECK(Distribution::one_hot(3, 1).probs == std::vector<double>{0, 1, 0});
  CHECK(Distribution::normalized({1, 3})[1] == doctest::Approx(0.75));
  CHECK_THROWS_AS(Distribution::normalized({0, 0}), std::invalid_argument);
}

TEST_CASE("scripted LM lookup order") {
  ScriptedLM lm(4);
  lm.set({9}, {}, Distribution::one_hot(4, 3));
  lm.set_any_context({}, Distribution::one_hot(4, 1));
  const auto s9 = lm.encode(TokenSequence{9});
  const auto s8 = lm.encode(TokenSequence{8});
  CHECK(lm.next_distribution(*s9, {})[3] == 1.0);
  CHECK(lm.next_distribution(*s8, {})[1] == 1.0);
  CHECK(lm.next_distribution(*s8, TokenSequence{0})[0] == doctest::Approx(0.25));
  CHECK_THROWS(lm.set({}, {}, Distribution({0.5, 0.5})));
}

TEST_CASE("sequence_logprob sums path probabilities") {
  ScriptedLM lm(4);
  lm.set_any_context({}, Distribution({0.1, 0.2, 0.3, 0.4}));
  lm.set_any_context({3}, Distribution({0.0, 0.5, 0.5, 0.0}));
  const auto lp = sequence_logprob(lm, TokenSequence{}, TokenSequence{3, 2});
  REQUIRE(lp.size() == 2);
  CHECK(lp[0] == doctest::Approx(std::log(0.4)));
  CHECK(lp[1] == doctest::Approx(std::log(0.5)));
  CHECK(std::isinf(sequence_logprob(lm, TokenSequence{}, TokenSequence{3, 0})[1]));
  CHECK_THROWS_AS(sequence_logprob(lm, TokenSequence{}, TokenSequence{}), std::invalid_argument);

  ScriptedLM path(5);
  path.script_path({1}, {4, 3, 2});
  const auto p = sequence_logprob(path, TokenSequence{1}, TokenSequence{4, 3, 2});
  for (double x : p) CHECK(x == 0.0);
}
