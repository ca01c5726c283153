#include "qagen/generation.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "qagen/error.hpp"
#include "qagen/filtering.hpp"
#include "qagen/rng.hpp"
#include "qagen/text.hpp"

namespace qagen {

std::string to_string(GenerationMode m) {
  switch (m) {
    case GenerationMode::AQGen:
      return "aqgen";
    case GenerationMode::QAGen:
      return "qagen";
    case GenerationMode::QAGen2S:
      return "qagen2s";
    case GenerationMode::QGenBaseline:
      return "qgen";
  }
  return "qagen2s";
}

GenerationMode mode_from_string(const std::string& s) {
  const std::string l = text::lower(s);
  if (l == "aqgen") return GenerationMode::AQGen;
  if (l == "qagen") return GenerationMode::QAGen;
  if (l == "qagen2s") return GenerationMode::QAGen2S;
  if (l == "qgen" || l == "qgenbaseline") return GenerationMode::QGenBaseline;
  throw UsageError("unknown generation mode '" + s + "'");
}

std::string to_string(ParseFailure f) {
  switch (f) {
    case ParseFailure::missing_eos:
      return "missing_eos";
    case ParseFailure::trailing_tokens:
      return "trailing_tokens";
    case ParseFailure::missing_separator:
      return "missing_separator";
    case ParseFailure::missing_code:
      return "missing_code";
    case ParseFailure::empty_field:
      return "empty_field";
    case ParseFailure::too_long:
      return "too_long";
  }
  return "unknown";
}

double DropStats::drop_rate() const {
  if (generated == 0) return 0.0;
  return static_cast<double>(dropped_uncontained + dropped_unparseable) /
         static_cast<double>(generated);
}

DropStats& DropStats::operator+=(const DropStats& o) {
  generated += o.generated;
  dropped_uncontained += o.dropped_uncontained;
  dropped_unparseable += o.dropped_unparseable;
  deduplicated += o.deduplicated;
  return *this;
}

namespace {

void check_plain(std::span<const TokenId> ids, const char* field) {
  if (ids.empty()) throw ValidationError(std::string(field) + " is empty");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (is_special(ids[i])) {
      throw ValidationError(std::string("special token ") + std::to_string(ids[i]) + " in " +
                            field + " at position " + std::to_string(i));
    }
  }
}

TokenSequence concat(std::initializer_list<std::span<const TokenId>> parts) {
  TokenSequence out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

const TokenId kSepArr[] = {special::kSep};
const TokenId kEosArr[] = {special::kEos};
const TokenId kCodeQArr[] = {special::kCodeQ};
const TokenId kCodeAArr[] = {special::kCodeA};

ParseResult fail(ParseFailure f) { return ParseResult{std::nullopt, f}; }

// Index of the terminating EOS; it must be the last token.
std::optional<ParseFailure> eos_position(std::span<const TokenId> t, std::size_t& eos) {
  const auto it = std::find(t.begin(), t.end(), special::kEos);
  if (it == t.end()) return ParseFailure::missing_eos;
  eos = static_cast<std::size_t>(it - t.begin());
  if (eos + 1 != t.size()) return ParseFailure::trailing_tokens;
  return std::nullopt;
}

// Body of a [code, body..., EOS] segment.
std::optional<ParseFailure> coded_body(std::span<const TokenId> t, TokenId code,
                                       std::span<const TokenId>& body) {
  if (t.empty() || t.front() != code) return ParseFailure::missing_code;
  std::size_t eos = 0;
  if (auto f = eos_position(t.subspan(1), eos)) return f;
  body = t.subspan(1, eos);
  if (body.empty()) return ParseFailure::empty_field;
  return std::nullopt;
}

}  // namespace

std::vector<TargetSegment> build_target(GenerationMode mode, std::span<const TokenId> q,
                                        std::span<const TokenId> a) {
  check_plain(q, "question");
  check_plain(a, "answer");
  switch (mode) {
    case GenerationMode::AQGen:
      return {{{}, concat({a, kSepArr, q, kEosArr})}};
    case GenerationMode::QAGen:
      return {{{}, concat({q, kSepArr, a, kEosArr})}};
    case GenerationMode::QAGen2S:
      return {{{}, concat({kCodeQArr, q, kEosArr})},
              {TokenSequence(q.begin(), q.end()), concat({kCodeAArr, a, kEosArr})}};
    case GenerationMode::QGenBaseline:
      return {{TokenSequence(a.begin(), a.end()), concat({q, kEosArr})}};
  }
  return {};
}

TokenSequence build_context(std::span<const TokenId> passage, std::span<const TokenId> suffix,
                            std::size_t max_context) {
  const std::size_t reserved = suffix.empty() ? 0 : suffix.size() + 1;
  const std::size_t keep =
      max_context > reserved ? std::min(passage.size(), max_context - reserved) : 0;
  TokenSequence out(passage.begin(), passage.begin() + static_cast<std::ptrdiff_t>(keep));
  if (!suffix.empty()) {
    out.push_back(special::kSep);
    out.insert(out.end(), suffix.begin(), suffix.end());
  }
  return out;
}

std::vector<std::pair<TokenSequence, TokenSequence>> training_pairs(
    GenerationMode mode, std::span<const TokenId> passage, std::span<const TokenId> question,
    std::span<const TokenId> answer, std::size_t max_context) {
  std::vector<std::pair<TokenSequence, TokenSequence>> out;
  for (auto& seg : build_target(mode, question, answer)) {
    out.emplace_back(build_context(passage, seg.context_suffix, max_context), std::move(seg.target));
  }
  return out;
}

ParseResult parse_output(GenerationMode mode, std::span<const TargetSegment> segments,
                         const SegmentLimits& limits) {
  ParsedPair p;
  switch (mode) {
    case GenerationMode::AQGen:
    case GenerationMode::QAGen: {
      if (segments.size() != 1) return fail(ParseFailure::missing_eos);
      std::span<const TokenId> t = segments[0].target;
      std::size_t eos = 0;
      if (auto f = eos_position(t, eos)) return fail(*f);
      const auto body = t.first(eos);
      const auto sep_it = std::find(body.begin(), body.end(), special::kSep);
      if (sep_it == body.end()) return fail(ParseFailure::missing_separator);
      const auto sep = static_cast<std::size_t>(sep_it - body.begin());
      const auto first = body.first(sep);
      const auto second = body.subspan(sep + 1);
      if (first.empty() || second.empty()) return fail(ParseFailure::empty_field);
      if (mode == GenerationMode::AQGen) {
        p.answer_ids.assign(first.begin(), first.end());
        p.question_ids.assign(second.begin(), second.end());
        p.answer_begin = 0;
        p.answer_end = sep + 1;
        p.question_begin = sep + 1;
        p.question_end = eos + 1;
      } else {
        p.question_ids.assign(first.begin(), first.end());
        p.answer_ids.assign(second.begin(), second.end());
        p.question_begin = 0;
        p.question_end = sep + 1;
        p.answer_begin = sep + 1;
        p.answer_end = eos + 1;
      }
      break;
    }
    case GenerationMode::QAGen2S: {
      if (segments.size() != 2) return fail(ParseFailure::missing_code);
      std::span<const TokenId> q, a;
      if (auto f = coded_body(segments[0].target, special::kCodeQ, q)) return fail(*f);
      if (auto f = coded_body(segments[1].target, special::kCodeA, a)) return fail(*f);
      p.question_ids.assign(q.begin(), q.end());
      p.answer_ids.assign(a.begin(), a.end());
      const std::size_t offset = segments[0].target.size();
      p.question_begin = 1;
      p.question_end = offset;
      p.answer_begin = offset + 1;
      p.answer_end = offset + segments[1].target.size();
      break;
    }
    case GenerationMode::QGenBaseline: {
      if (segments.size() != 1) return fail(ParseFailure::missing_eos);
      std::span<const TokenId> t = segments[0].target;
      std::size_t eos = 0;
      if (auto f = eos_position(t, eos)) return fail(*f);
      if (eos == 0 || segments[0].context_suffix.empty()) return fail(ParseFailure::empty_field);
      p.question_ids.assign(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(eos));
      p.answer_ids = segments[0].context_suffix;
      p.question_begin = 0;
      p.question_end = eos + 1;
      break;
    }
  }
  if (p.question_ids.size() > limits.question_max || p.answer_ids.size() > limits.answer_max) {
    return fail(ParseFailure::too_long);
  }
  return ParseResult{std::move(p), std::nullopt};
}

ParseResult parse_output(GenerationMode mode, std::span<const TokenId> tokens,
                         const SegmentLimits& limits) {
  std::vector<TargetSegment> segments;
  if (mode == GenerationMode::QAGen2S) {
    const auto it = std::find(tokens.begin(), tokens.end(), special::kEos);
    const auto cut = it == tokens.end() ? tokens.size() : static_cast<std::size_t>(it - tokens.begin()) + 1;
    segments.push_back({{}, TokenSequence(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cut))});
    segments.push_back({{}, TokenSequence(tokens.begin() + static_cast<std::ptrdiff_t>(cut), tokens.end())});
  } else {
    segments.push_back({{}, TokenSequence(tokens.begin(), tokens.end())});
  }
  return parse_output(mode, segments, limits);
}

bool contains_answer(std::string_view passage_text, std::string_view answer) {
  const std::string a = text::collapse_whitespace(answer);
  if (a.empty()) return false;
  return text::collapse_whitespace(passage_text).find(a) != std::string::npos;
}

std::optional<Containment> locate_answer(std::string_view passage_text,
                                         std::span<const TokenSpan> passage_tokens,
                                         std::span<const TokenId> answer_ids) {
  const std::size_t n = answer_ids.size();
  if (n == 0 || n > passage_tokens.size()) return std::nullopt;
  for (std::size_t i = 0; i + n <= passage_tokens.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < n && match; ++j) match = passage_tokens[i + j].id == answer_ids[j];
    if (!match) continue;
    const std::size_t b = passage_tokens[i].begin;
    const std::size_t e = passage_tokens[i + n - 1].end;
    Containment c;
    c.surface = std::string(passage_text.substr(b, e - b));
    c.char_start = *text::find_first(passage_text, c.surface);
    return c;
  }
  return std::nullopt;
}

namespace {

bool has_digit(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool capitalized(std::string_view s) { return !s.empty() && s[0] >= 'A' && s[0] <= 'Z'; }

bool lower_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

bool sentence_start(const std::vector<text::Piece>& pieces, std::size_t i) {
  if (i == 0) return true;
  const auto prev = pieces[i - 1].text;
  return prev == "." || prev == "!" || prev == "?";
}

}  // namespace

std::vector<SpanProposal> propose_spans(const Passage& passage, std::size_t count,
                                        std::uint64_t seed) {
  if (count == 0) throw UsageError("propose_spans: count must be >= 1");
  constexpr std::size_t kMaxRun = 5;
  constexpr std::size_t kMaxChunk = 3;
  const auto pieces = text::pretokenize(passage.text);
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& p : pieces) ++freq[text::lower(p.text)];

  std::map<std::string, SpanProposal> best;
  auto add = [&](std::size_t first, std::size_t last, double bonus) {
    double rarity = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
      rarity += 1.0 / static_cast<double>(freq[text::lower(pieces[i].text)]);
    }
    rarity /= static_cast<double>(last - first + 1);
    const std::size_t b = pieces[first].begin;
    std::string surface = passage.text.substr(b, pieces[last].end - b);
    SpanProposal sp{surface, *text::find_first(passage.text, surface), bonus + rarity};
    auto [it, inserted] = best.emplace(surface, sp);
    if (!inserted && sp.score > it->second.score) it->second.score = sp.score;
  };

  // Maximal runs of pieces satisfying `pred`, split into windows of `cap`.
  auto runs = [&](auto pred, std::size_t cap, double bonus, bool skip_initial_stopword) {
    std::size_t i = 0;
    while (i < pieces.size()) {
      if (pieces[i].punctuation || !pred(pieces[i].text)) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < pieces.size() && !pieces[j + 1].punctuation && pred(pieces[j + 1].text)) ++j;
      for (std::size_t s = i; s <= j; s += cap) {
        const std::size_t e = std::min(j, s + cap - 1);
        if (skip_initial_stopword && s == e && sentence_start(pieces, s) &&
            is_stopword(text::lower(pieces[s].text))) {
          continue;
        }
        add(s, e, bonus);
      }
      i = j + 1;
    }
  };
  runs(capitalized, kMaxRun, 1.0, true);
  runs(has_digit, kMaxRun, 0.8, false);
  runs([](std::string_view s) { return lower_alpha(s) && s.size() >= 4 && !is_stopword(s); },
       kMaxChunk, 0.5, false);

  std::vector<SpanProposal> out;
  out.reserve(best.size());
  for (auto& [_, sp] : best) out.push_back(std::move(sp));
  std::sort(out.begin(), out.end(), [seed](const SpanProposal& a, const SpanProposal& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto ha = splitmix64(seed ^ fnv1a(a.text));
    const auto hb = splitmix64(seed ^ fnv1a(b.text));
    if (ha != hb) return ha < hb;
    return a.char_start < b.char_start;
  });
  if (out.size() > count) out.resize(count);
  return out;
}

namespace {

std::vector<double> slice(const std::vector<double>& v, std::size_t b, std::size_t e) {
  return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(b),
                             v.begin() + static_cast<std::ptrdiff_t>(e));
}

DecodedSequence decode_one(const ConditionalLM& lm, std::span<const TokenId> ctx,
                           const DecodeConfig& cfg, Rng& rng, std::span<const TokenId> forced) {
  switch (cfg.strategy) {
    case Strategy::greedy:
      return greedy_decode(lm, ctx, cfg.max_len, forced);
    case Strategy::beam:
      return beam_search(lm, ctx, cfg.beam_width, cfg.max_len, forced).front();
    case Strategy::topk_nucleus:
      break;
  }
  return sample_sequence(lm, ctx, cfg, rng, forced);
}

// Decodes `n` candidates for one context: n independent draws, or the n best
// beams when the strategy is beam search.
std::vector<DecodedSequence> decode_many(const ConditionalLM& lm, std::span<const TokenId> ctx,
                                         const DecodeConfig& cfg, std::size_t n,
                                         std::uint64_t seed, const std::string& tag,
                                         std::span<const TokenId> forced) {
  if (cfg.strategy == Strategy::beam) {
    auto beams = beam_search(lm, ctx, std::max(cfg.beam_width, n), cfg.max_len, forced);
    if (beams.size() > n) beams.resize(n);
    return beams;
  }
  std::vector<DecodedSequence> out;
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng = derive_stream(seed, tag, s);
    out.push_back(decode_one(lm, ctx, cfg, rng, forced));
  }
  return out;
}

}  // namespace

GenerateResult generate(GenerationMode mode, const ConditionalLM& lm, const Vocabulary& vocab,
                        const Passage& passage, std::size_t n, const DecodeConfig& cfg,
                        std::uint64_t seed, const GenerateOptions& options) {
  if (n == 0) throw UsageError("generate: n must be >= 1");
  cfg.validate();
  const SegmentLimits& lim = options.limits;
  const auto passage_tokens = tokenize_with_spans(passage.text, vocab);
  TokenSequence passage_ids;
  passage_ids.reserve(passage_tokens.size());
  for (const auto& t : passage_tokens) passage_ids.push_back(t.id);
  const std::size_t max_ctx = lm.max_context_length();

  GenerateResult result;
  std::vector<GeneratedPair> candidates;

  // Records one decoded candidate; `answer_override` carries QGen spans.
  auto accept = [&](const std::vector<TargetSegment>& segments,
                    const std::vector<double>& logprobs, std::size_t sample_index,
                    const SpanProposal* span) {
    const ParseResult parsed = parse_output(mode, segments, lim);
    if (!parsed) {
      ++result.stats.dropped_unparseable;
      return;
    }
    const ParsedPair& pp = *parsed.pair;
    GeneratedPair pair;
    pair.passage_id = passage.id;
    pair.sample_index = sample_index;
    pair.question = detokenize(pp.question_ids, vocab);
    pair.question_token_logprobs = slice(logprobs, pp.question_begin, pp.question_end);
    pair.answer_token_logprobs = slice(logprobs, pp.answer_begin, pp.answer_end);
    if (span != nullptr) {
      pair.answer = span->text;
      pair.answer_char_start = span->char_start;
    } else if (auto loc = locate_answer(passage.text, passage_tokens, pp.answer_ids)) {
      pair.answer = std::move(loc->surface);
      pair.answer_char_start = loc->char_start;
    }
    pair.contained = pair.answer_char_start.has_value() && contains_answer(passage.text, pair.answer);
    if (!pair.contained) {
      ++result.stats.dropped_uncontained;
      return;
    }
    candidates.push_back(std::move(pair));
  };

  const TokenSequence base_ctx = build_context(passage_ids, {}, max_ctx);
  switch (mode) {
    case GenerationMode::AQGen:
    case GenerationMode::QAGen: {
      DecodeConfig c = cfg;
      c.max_len = lim.question_max + lim.answer_max + 2;
      const auto decoded = decode_many(lm, base_ctx, c, n, seed, passage.id, {});
      result.stats.generated = decoded.size();
      for (std::size_t s = 0; s < decoded.size(); ++s) {
        accept({{{}, decoded[s].ids}}, decoded[s].step_logprobs, s, nullptr);
      }
      break;
    }
    case GenerationMode::QAGen2S: {
      DecodeConfig c = cfg;
      c.max_len = lim.question_max + 2;
      const auto questions = decode_many(lm, base_ctx, c, n, seed, passage.id, kCodeQArr);
      result.stats.generated = questions.size();
      for (std::size_t s = 0; s < questions.size(); ++s) {
        const DecodedSequence& dq = questions[s];
        std::span<const TokenId> q;
        if (coded_body(dq.ids, special::kCodeQ, q) || q.size() > lim.question_max) {
          ++result.stats.dropped_unparseable;
          continue;
        }
        const TokenSequence q_ids(q.begin(), q.end());
        const TokenSequence ctx2 = build_context(passage_ids, q_ids, max_ctx);
        const DecodedSequence da = greedy_decode(lm, ctx2, lim.answer_max + 2, kCodeAArr);
        std::vector<double> lp = dq.step_logprobs;
        lp.insert(lp.end(), da.step_logprobs.begin(), da.step_logprobs.end());
        accept({{{}, dq.ids}, {q_ids, da.ids}}, lp, s, nullptr);
      }
      break;
    }
    case GenerationMode::QGenBaseline: {
      const auto spans = propose_spans(passage, n, seed);
      result.stats.generated = spans.size();
      DecodeConfig c = cfg;
      c.max_len = lim.question_max + 1;
      for (std::size_t s = 0; s < spans.size(); ++s) {
        const TokenSequence a_ids = tokenize(spans[s].text, vocab);
        const TokenSequence ctx = build_context(passage_ids, a_ids, max_ctx);
        Rng rng = derive_stream(seed, passage.id, s);
        const DecodedSequence dq = decode_one(lm, ctx, c, rng, {});
        accept({{a_ids, dq.ids}}, dq.step_logprobs, s, &spans[s]);
      }
      break;
    }
  }

  if (!options.deduplicate) {
    result.pairs = std::move(candidates);
    return result;
  }
  // Keep the better-scored copy of exact (question, answer) repeats, in
  // sample order.
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  std::vector<bool> keep(candidates.size(), true);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto key = std::make_pair(candidates[i].question, candidates[i].answer);
    const auto [it, inserted] = seen.emplace(key, i);
    if (inserted) continue;
    ++result.stats.deduplicated;
    const std::size_t j = it->second;
    if (lm_score(candidates[i], mode, PoolingRule::sum) > lm_score(candidates[j], mode, PoolingRule::sum)) {
      keep[j] = false;
      it->second = i;
    } else {
      keep[i] = false;
    }
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (keep[i]) result.pairs.push_back(std::move(candidates[i]));
  }
  return result;
}

}  // namespace qagen
