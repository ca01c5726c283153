#include "qagen/lm.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qagen/error.hpp"

namespace qagen {

bool Distribution::valid(double tol) const {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

Distribution Distribution::uniform(std::size_t n) {
  return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Distribution Distribution::one_hot(std::size_t n, TokenId id) {
  std::vector<double> p(n, 0.0);
  p.at(static_cast<std::size_t>(id)) = 1.0;
  return Distribution(std::move(p));
}

Distribution Distribution::normalized(std::vector<double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("distribution weights must have a positive finite sum");
  }
  for (double& w : weights) w /= total;
  return Distribution(std::move(weights));
}

double safe_log(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

namespace {

struct ScriptedState final : EncoderState {
  TokenSequence context;
};

}  // namespace

ScriptedLM::ScriptedLM(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size == 0) throw std::invalid_argument("ScriptedLM needs a non-empty vocabulary");
}

void ScriptedLM::set(const TokenSequence& context, const TokenSequence& prefix, Distribution d) {
  if (d.size() != vocab_size_ || !d.valid()) {
    throw ValidationError("scripted distribution is not a valid distribution over the vocabulary");
  }
  table_[{context, prefix}] = std::move(d);
}

void ScriptedLM::set_any_context(const TokenSequence& prefix, Distribution d) {
  if (d.size() != vocab_size_ || !d.valid()) {
    throw ValidationError("scripted distribution is not a valid distribution over the vocabulary");
  }
  any_context_[prefix] = std::move(d);
}

void ScriptedLM::script_path(const TokenSequence& context, const TokenSequence& target) {
  TokenSequence prefix;
  for (TokenId t : target) {
    set(context, prefix, Distribution::one_hot(vocab_size_, t));
    prefix.push_back(t);
  }
}

std::unique_ptr<EncoderState> ScriptedLM::encode(std::span<const TokenId> context) const {
  auto s = std::make_unique<ScriptedState>();
  s->context.assign(context.begin(), context.end());
  return s;
}

Distribution ScriptedLM::next_distribution(const EncoderState& state,
                                           std::span<const TokenId> prefix) const {
  const auto& s = dynamic_cast<const ScriptedState&>(state);
  TokenSequence key(prefix.begin(), prefix.end());
  if (const auto it = table_.find({s.context, key}); it != table_.end()) return it->second;
  if (const auto it = any_context_.find(key); it != any_context_.end()) return it->second;
  return Distribution::uniform(vocab_size_);
}

std::vector<double> sequence_logprob(const ConditionalLM& lm, std::span<const TokenId> context,
                                     std::span<const TokenId> target) {
  if (target.empty()) throw std::invalid_argument("sequence_logprob: empty target");
  const auto state = lm.encode(context);
  std::vector<double> out;
  out.reserve(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const Distribution d = lm.next_distribution(*state, target.first(i));
    out.push_back(safe_log(d[static_cast<std::size_t>(target[i])]));
  }
  return out;
}

}  // namespace qagen
