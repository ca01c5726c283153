#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qagen/corpus.hpp"

namespace qagen {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kCodeQ = 4;
inline constexpr TokenId kCodeA = 5;
inline constexpr TokenId kCount = 6;
}  // namespace special

inline bool is_special(TokenId id) { return id >= 0 && id < special::kCount; }

/// Dense token table. Ids 0..5 are PAD, BOS, EOS, SEP, CODE_Q, CODE_A.
/// Words missing from the table are spelled with single-character pieces
/// ("x", then "##y" continuations) and, for characters never seen when the
/// vocabulary was built, UTF-8 byte pieces ("<0xNN>", "##<0xNN>").
class Vocabulary {
 public:
  Vocabulary();
  /// Throws ValidationError unless the first six tokens are the specials,
  /// tokens are unique, and every byte piece is present.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Token id plus the UTF-8 byte span of source text it came from.
struct TokenSpan {
  TokenId id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<TokenSpan> tokenize_with_spans(std::string_view text, const Vocabulary& vocab);

/// Lowercased word/punctuation tokens; never fails thanks to piece fallback.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

/// Joins word tokens with single spaces, glues continuation pieces, and
/// omits spaces before closing punctuation. Specials other than PAD/BOS are
/// rendered literally.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

/// Specials, then the `max_size` most frequent lowercased words (count
/// descending, then lexicographic), then every character piece.
Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size);
Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size);

/// Word frequencies as used by build_vocab (lowercased, punctuation excluded).
std::vector<std::pair<std::string, std::size_t>> word_frequencies(std::span<const std::string> texts);

}  // namespace qagen
