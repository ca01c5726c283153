#include "qagen/text.hpp"

#include <cctype>

namespace qagen::text {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// '.' or ',' glued between two digits belongs to the number.
bool numeric_glue(std::string_view s, std::size_t i) {
  return (s[i] == '.' || s[i] == ',') && i > 0 && i + 1 < s.size() && is_digit(s[i - 1]) &&
         is_digit(s[i + 1]);
}

}  // namespace

std::vector<Piece> pretokenize(std::string_view s) {
  std::vector<Piece> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_space(s[i])) {
      ++i;
      continue;
    }
    if (is_ascii_punct(s[i]) && !numeric_glue(s, i)) {
      out.push_back({s.substr(i, 1), i, i + 1, true});
      ++i;
      continue;
    }
    const std::size_t begin = i;
    while (i < s.size() && !is_space(s[i]) && (!is_ascii_punct(s[i]) || numeric_glue(s, i))) {
      ++i;
    }
    out.push_back({s.substr(begin, i - begin), begin, i, false});
  }
  return out;
}

std::size_t count_pieces(std::string_view s) { return pretokenize(s).size(); }

std::string truncate_pieces(std::string_view s, std::size_t max_pieces) {
  const auto pieces = pretokenize(s);
  if (pieces.size() <= max_pieces) return std::string(s);
  if (max_pieces == 0) return {};
  return std::string(s.substr(0, pieces[max_pieces - 1].end));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::size_t utf8_seq_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation or invalid byte: treat as one unit
}

std::vector<std::string_view> utf8_chars(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t n = utf8_seq_len(static_cast<unsigned char>(s[i]));
    if (i + n > s.size()) n = s.size() - i;
    out.push_back(s.substr(i, n));
    i += n;
  }
  return out;
}

std::size_t utf8_length(std::string_view s) { return codepoint_offset(s, s.size()); }

std::optional<std::size_t> byte_offset(std::string_view s, std::size_t cp) {
  std::size_t i = 0;
  for (std::size_t k = 0; k < cp; ++k) {
    if (i >= s.size()) return std::nullopt;
    i += utf8_seq_len(static_cast<unsigned char>(s[i]));
  }
  if (i > s.size()) return std::nullopt;
  return i;
}

std::size_t codepoint_offset(std::string_view s, std::size_t byte) {
  std::size_t cp = 0;
  std::size_t i = 0;
  while (i < byte && i < s.size()) {
    i += utf8_seq_len(static_cast<unsigned char>(s[i]));
    ++cp;
  }
  return cp;
}

std::optional<std::string> utf8_substr(std::string_view s, std::size_t cp_start,
                                       std::size_t cp_len) {
  const auto b = byte_offset(s, cp_start);
  if (!b) return std::nullopt;
  const auto e = byte_offset(s.substr(*b), cp_len);
  if (!e) return std::nullopt;
  return std::string(s.substr(*b, *e));
}

std::optional<std::size_t> find_first(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return std::nullopt;
  const auto pos = haystack.find(needle);
  if (pos == std::string_view::npos) return std::nullopt;
  return codepoint_offset(haystack, pos);
}

}  // namespace qagen::text
