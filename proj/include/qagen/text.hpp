#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qagen::text {

/// A word or punctuation piece of the input with its UTF-8 byte span.
struct Piece {
  std::string_view text;
  std::size_t begin = 0;  // byte offset
  std::size_t end = 0;    // byte offset, exclusive
  bool punctuation = false;
};

/// Splits on whitespace and ASCII punctuation. Punctuation characters become
/// single pieces, except '.' and ',' between two digits, which stay inside
/// the number ("97.6", "100,000").
std::vector<Piece> pretokenize(std::string_view text);

/// Number of pieces produced by pretokenize().
std::size_t count_pieces(std::string_view text);

/// Prefix of `text` ending at the end of its `max_pieces`-th piece.
/// Returns `text` unchanged when it has at most `max_pieces` pieces.
std::string truncate_pieces(std::string_view text, std::size_t max_pieces);

/// ASCII lowercase; non-ASCII bytes are left untouched.
std::string lower(std::string_view s);

/// Trims and collapses every run of whitespace to one space.
std::string collapse_whitespace(std::string_view s);

bool is_space(char c);
bool is_ascii_punct(char c);

// UTF-8 helpers. Offsets exposed in file formats and public structs are
// code-point offsets; byte offsets only live inside the library.

/// Length in bytes of the UTF-8 sequence starting with `lead`.
std::size_t utf8_seq_len(unsigned char lead);

/// Splits into code points (each as its own byte string).
std::vector<std::string_view> utf8_chars(std::string_view s);

std::size_t utf8_length(std::string_view s);

/// Byte offset of code point `cp`; nullopt if past the end.
std::optional<std::size_t> byte_offset(std::string_view s, std::size_t cp);

/// Code-point offset of byte offset `byte` (which must be a boundary).
std::size_t codepoint_offset(std::string_view s, std::size_t byte);

/// Substring by code-point range; nullopt if out of bounds.
std::optional<std::string> utf8_substr(std::string_view s, std::size_t cp_start,
                                       std::size_t cp_len);

/// Code-point offset of the first occurrence of `needle`, if any.
std::optional<std::size_t> find_first(std::string_view haystack, std::string_view needle);

}  // namespace qagen::text
