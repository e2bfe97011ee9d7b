#pragma once

// Character offsets throughout the toolkit count Unicode scalar values, not
// bytes. These helpers translate between the two.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace surpnov::utf8 {

/// Half-open interval [start, end) of code-point indices.
struct CharRange {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool empty() const { return end <= start; }
  bool contains(const CharRange& other) const {
    return start <= other.start && other.end <= end;
  }
  bool intersects(const CharRange& other) const {
    return !empty() && !other.empty() && start < other.end && other.start < end;
  }
  friend bool operator==(const CharRange&, const CharRange&) = default;
};

/// Decodes UTF-8 into code points. Throws surpnov::Error on malformed input.
std::u32string decode(std::string_view text);

std::string encode(std::u32string_view cps);
std::string encode(char32_t cp);

/// Number of code points in a valid UTF-8 string.
std::size_t length(std::string_view text);

/// Byte offset of every code point plus a trailing entry equal to text.size().
std::vector<std::size_t> byte_offsets(std::string_view text);

/// Substring by code-point range.
std::string substr(std::string_view text, CharRange range);

bool is_space(char32_t cp);

/// Letters and digits, for word-boundary decisions. ASCII is classified
/// exactly; outside ASCII, common punctuation and space blocks are excluded
/// and everything else is treated as a word character.
bool is_word_char(char32_t cp);

}  // namespace surpnov::utf8
