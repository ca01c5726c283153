#include "qagen/filtering.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_map>

#include "qagen/error.hpp"
#include "qagen/eval.hpp"
#include "qagen/text.hpp"

namespace qagen {

std::string to_string(PoolingRule p) { return p == PoolingRule::sum ? "sum" : "avg"; }

PoolingRule pooling_from_string(const std::string& s) {
  if (s == "sum") return PoolingRule::sum;
  if (s == "avg" || s == "average") return PoolingRule::avg;
  throw UsageError("unknown pooling rule '" + s + "'");
}

namespace {

double pool(const std::vector<double>& lp, PoolingRule pooling, const GeneratedPair& pair,
            const char* segment) {
  if (lp.empty()) {
    throw ScoringError("pair " + pair.passage_id + "#" + std::to_string(pair.sample_index) +
                       ": empty " + segment + " logprobs");
  }
  const double sum = std::accumulate(lp.begin(), lp.end(), 0.0);
  return pooling == PoolingRule::sum ? sum : sum / static_cast<double>(lp.size());
}

}  // namespace

double lm_score(const GeneratedPair& pair, GenerationMode mode, PoolingRule pooling) {
  switch (mode) {
    case GenerationMode::QAGen:
    case GenerationMode::QAGen2S:
      return pool(pair.answer_token_logprobs, pooling, pair, "answer");
    case GenerationMode::AQGen:
      return pool(pair.answer_token_logprobs, pooling, pair, "answer") +
             pool(pair.question_token_logprobs, pooling, pair, "question");
    case GenerationMode::QGenBaseline:
      return pool(pair.question_token_logprobs, pooling, pair, "question");
  }
  return 0.0;
}

std::size_t FilterReport::dropped() const {
  std::size_t n = 0;
  for (const auto& [_, v] : drops) n += v;
  return n;
}

bool FilterReport::reconciles() const {
  if (kept_count + dropped() != input_count) return false;
  if (groups.empty()) return true;
  std::size_t in = 0, kept = 0;
  for (const auto& g : groups) {
    if (g.kept > g.input) return false;
    in += g.input;
    kept += g.kept;
  }
  return in == input_count && kept == kept_count;
}

FilterResult select_top_m(const std::vector<GeneratedPair>& pairs, std::size_t m,
                          PoolingRule pooling, GenerationMode mode) {
  if (m == 0) throw UsageError("select_top_m: m must be >= 1");
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(pairs[i].passage_id);
    if (inserted) order.push_back(pairs[i].passage_id);
    it->second.push_back(i);
  }
  std::vector<double> scores(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) scores[i] = lm_score(pairs[i], mode, pooling);

  FilterResult r;
  r.report.stage = "lm";
  r.report.input_count = pairs.size();
  for (const auto& pid : order) {
    auto idx = groups[pid];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return pairs[a].sample_index < pairs[b].sample_index;
    });
    const std::size_t keep = std::min(m, idx.size());
    for (std::size_t k = 0; k < keep; ++k) r.kept.push_back(pairs[idx[k]]);
    r.report.groups.push_back({pid, idx.size(), keep});
  }
  r.report.kept_count = r.kept.size();
  r.report.drops["below_top_m"] = pairs.size() - r.kept.size();
  return r;
}

FilterResult round_trip_filter(const std::vector<GeneratedPair>& pairs, const Corpus& passages,
                               const RCOracle& oracle) {
  FilterResult r;
  r.report.stage = "roundtrip";
  r.report.input_count = pairs.size();
  r.report.drops["mismatch"] = 0;
  r.report.drops["oracle_failure"] = 0;
  std::vector<std::string> order;
  std::unordered_map<std::string, GroupSize> groups;
  for (const auto& pair : pairs) {
    auto [it, inserted] = groups.try_emplace(pair.passage_id, GroupSize{pair.passage_id, 0, 0});
    if (inserted) order.push_back(pair.passage_id);
    ++it->second.input;
    std::string predicted;
    try {
      predicted = oracle.answer(passages.at(pair.passage_id).text, pair.question);
    } catch (const std::exception&) {
      ++r.report.drops["oracle_failure"];
      continue;
    }
    if (exact_match(predicted, pair.answer) == 1) {
      r.kept.push_back(pair);
      ++it->second.kept;
    } else {
      ++r.report.drops["mismatch"];
    }
  }
  for (const auto& pid : order) r.report.groups.push_back(groups[pid]);
  r.report.kept_count = r.kept.size();
  return r;
}

FilterResult passthrough_filter(const std::vector<GeneratedPair>& pairs) {
  FilterResult r;
  r.kept = pairs;
  r.report.stage = "none";
  r.report.input_count = pairs.size();
  r.report.kept_count = pairs.size();
  return r;
}

bool is_stopword(std::string_view w) {
  static const std::set<std::string, std::less<>> kStop = {
      "a",     "an",    "the",   "and",   "or",    "but",   "if",    "of",    "at",    "by",
      "for",   "with",  "about", "to",    "from",  "in",    "on",    "into",  "over",  "under",
      "is",    "are",   "was",   "were",  "be",    "been",  "being", "am",    "do",    "does",
      "did",   "have",  "has",   "had",   "what",  "which", "who",   "whom",  "whose", "when",
      "where", "why",   "how",   "this",  "that",  "these", "those", "it",    "its",   "he",
      "she",   "they",  "them",  "his",   "her",   "their", "we",    "you",   "i",     "as",
      "than",  "then",  "so",    "not",   "no",    "can",   "could", "would", "should", "will",
      "there", "here",  "also",  "such",  "after", "before", "during", "while", "all", "any",
      "some",  "most",  "other", "s",     "one",   "name",  "many",  "much",  "very"};
  return kStop.contains(w);
}

std::string lexical_oracle(std::string_view passage, std::string_view question,
                           const LexicalOracleOptions& options) {
  const auto pieces = text::pretokenize(passage);
  if (pieces.empty()) return {};
  std::set<std::string> qwords;
  for (const auto& p : text::pretokenize(question)) {
    if (p.punctuation) continue;
    std::string w = text::lower(p.text);
    if (!is_stopword(w)) qwords.insert(std::move(w));
  }
  std::vector<std::string> lowered;
  lowered.reserve(pieces.size());
  for (const auto& p : pieces) lowered.push_back(text::lower(p.text));

  const std::size_t n = pieces.size();
  long best_score = -1;
  std::size_t best_b = 0, best_e = 0;  // inclusive piece range
  for (std::size_t b = 0; b < n; ++b) {
    if (pieces[b].punctuation) continue;
    bool content = false;
    for (std::size_t e = b; e < n && e - b < options.max_window; ++e) {
      if (qwords.contains(lowered[e])) break;  // windows never hold question words
      if (pieces[e].punctuation) continue;
      content = content || !is_stopword(lowered[e]);
      if (!content) continue;  // stopword-only windows are not answers
      std::set<std::string_view> hits;
      const std::size_t lo = b >= options.radius ? b - options.radius : 0;
      const std::size_t hi = std::min(n - 1, e + options.radius);
      for (std::size_t i = lo; i <= hi; ++i) {
        if ((i < b || i > e) && qwords.contains(lowered[i])) hits.insert(lowered[i]);
      }
      const long score = static_cast<long>(hits.size());
      const bool wins = score > best_score ||
                        (score == best_score && e - b < best_e - best_b);
      if (wins) {
        best_score = score;
        best_b = b;
        best_e = e;
      }
    }
  }
  if (best_score < 0) return std::string(pieces.front().text);
  const std::size_t start = pieces[best_b].begin;
  return std::string(passage.substr(start, pieces[best_e].end - start));
}

}  // namespace qagen
