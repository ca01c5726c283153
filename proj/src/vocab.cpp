#include "qagen/vocab.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "qagen/error.hpp"
#include "qagen/text.hpp"

namespace qagen {

namespace {

constexpr std::string_view kContinuation = "##";

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> kSpecials = {"<pad>", "<s>", "</s>", "<sep>", "<q>", "<a>"};
  return kSpecials;
}

std::string byte_token(unsigned char b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "<0x%02X>", b);
  return buf;
}

std::optional<unsigned char> parse_byte_token(std::string_view t) {
  if (t.size() != 6 || t.substr(0, 3) != "<0x" || t.back() != '>') return std::nullopt;
  unsigned value = 0;
  for (char c : t.substr(3, 2)) {
    value <<= 4;
    if (c >= '0' && c <= '9') value |= static_cast<unsigned>(c - '0');
    else if (c >= 'A' && c <= 'F') value |= static_cast<unsigned>(c - 'A' + 10);
    else return std::nullopt;
  }
  return static_cast<unsigned char>(value);
}

bool opens(std::string_view t) { return t == "(" || t == "[" || t == "{" || t == "$"; }
bool closes(std::string_view t) {
  return t == "." || t == "," || t == ";" || t == ":" || t == "?" || t == "!" || t == ")" ||
         t == "]" || t == "}" || t == "%";
}

// Spells one lowercased word with character pieces, falling back to bytes.
void spell(std::string_view word, std::size_t offset, const Vocabulary& vocab,
           std::vector<TokenSpan>& out) {
  bool first = true;
  std::size_t pos = 0;
  for (auto ch : text::utf8_chars(word)) {
    const std::size_t begin = offset + pos;
    const std::size_t end = begin + ch.size();
    pos += ch.size();
    const std::string piece = first ? std::string(ch) : std::string(kContinuation) + std::string(ch);
    if (const auto id = vocab.find(piece)) {
      out.push_back({*id, begin, end});
    } else {
      for (std::size_t b = 0; b < ch.size(); ++b) {
        const bool cont = !(first && b == 0);
        const std::string bt = (cont ? std::string(kContinuation) : std::string()) +
                               byte_token(static_cast<unsigned char>(ch[b]));
        out.push_back({*vocab.find(bt), begin, end});
      }
    }
    first = false;
  }
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& specials = special_tokens();
  if (tokens_.empty()) {
    tokens_ = specials;
  }
  if (tokens_.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens_.begin())) {
    throw ValidationError("vocabulary must start with the six special tokens");
  }
  for (int b = 0; b < 256; ++b) {
    const std::string bt = byte_token(static_cast<unsigned char>(b));
    for (const std::string& t : {bt, std::string(kContinuation) + bt}) {
      if (std::find(tokens_.begin(), tokens_.end(), t) == tokens_.end()) tokens_.push_back(t);
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenSpan> tokenize_with_spans(std::string_view input, const Vocabulary& vocab) {
  std::vector<TokenSpan> out;
  const std::string lowered = text::lower(input);
  for (const auto& piece : text::pretokenize(lowered)) {
    if (const auto id = vocab.find(piece.text)) {
      out.push_back({*id, piece.begin, piece.end});
    } else {
      spell(piece.text, piece.begin, vocab, out);
    }
  }
  return out;
}

TokenSequence tokenize(std::string_view input, const Vocabulary& vocab) {
  TokenSequence ids;
  for (const auto& t : tokenize_with_spans(input, vocab)) ids.push_back(t.id);
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  std::string_view prev;
  for (TokenId id : ids) {
    if (id == special::kPad || id == special::kBos) continue;
    std::string_view tok = vocab.token(id);
    bool glue = false;
    if (!is_special(id) && tok.substr(0, kContinuation.size()) == kContinuation) {
      tok.remove_prefix(kContinuation.size());
      glue = true;
    }
    std::string piece;
    if (const auto b = parse_byte_token(tok); b && !is_special(id)) {
      piece.assign(1, static_cast<char>(*b));
    } else {
      piece.assign(tok);
    }
    if (!out.empty() && !glue && !closes(piece) && !opens(prev)) out.push_back(' ');
    out += piece;
    prev = tok;
  }
  return out;
}

std::vector<std::pair<std::string, std::size_t>> word_frequencies(std::span<const std::string> texts) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    const std::string lowered = text::lower(t);
    for (const auto& piece : text::pretokenize(lowered)) {
      if (!piece.punctuation) ++counts[std::string(piece.text)];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> out(counts.begin(), counts.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size) {
  std::vector<std::string> tokens = special_tokens();
  std::set<std::string> present(tokens.begin(), tokens.end());
  auto add = [&](const std::string& t) {
    if (present.insert(t).second) tokens.push_back(t);
  };

  const auto freq = word_frequencies(texts);
  for (std::size_t i = 0; i < freq.size() && i < max_size; ++i) add(freq[i].first);

  std::set<std::string> chars;
  for (char c = '!'; c <= '~'; ++c) {
    if (c < 'A' || c > 'Z') chars.insert(std::string(1, c));
  }
  for (const auto& t : texts) {
    const std::string lowered = text::lower(t);
    for (const auto& piece : text::pretokenize(lowered)) {
      for (auto ch : text::utf8_chars(piece.text)) chars.insert(std::string(ch));
    }
  }
  for (const auto& c : chars) add(c);
  for (const auto& c : chars) add(std::string(kContinuation) + c);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size) {
  std::vector<std::string> texts;
  for (const auto& p : corpus.passages()) texts.push_back(p.text);
  for (const auto& e : corpus.examples()) {
    texts.push_back(e.question);
    texts.push_back(e.answer_text);
  }
  return build_vocab(texts, max_size);
}

}  // namespace qagen
