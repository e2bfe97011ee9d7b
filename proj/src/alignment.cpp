#include "surpnov/alignment.hpp"

#include <cmath>

#include "surpnov/error.hpp"

namespace surpnov {

std::size_t TokenScoring::content_token_count() const {
  std::size_t n = 0;
  for (const auto& tok : tokens) n += tok.special ? 0 : 1;
  return n;
}

void validate_scoring(const TokenScoring& scoring) {
  const std::u32string text = utf8::decode(scoring.text);
  std::vector<bool> covered(text.size(), false);
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < scoring.tokens.size(); ++i) {
    const auto& tok = scoring.tokens[i];
    const std::string where = "token " + std::to_string(i);
    if (!std::isfinite(tok.logprob) || tok.logprob > 0.0) {
      throw AlignmentError(where + ": logprob must be finite and <= 0");
    }
    if (tok.boundary_mass && !(*tok.boundary_mass > 0.0 && *tok.boundary_mass <= 1.0)) {
      throw AlignmentError(where + ": boundary_mass outside (0, 1]");
    }
    if (tok.special) continue;
    if (tok.range.start > tok.range.end || tok.range.end > text.size()) {
      throw AlignmentError(where + ": range outside text");
    }
    if (tok.range.start < prev_end) {
      throw AlignmentError(where + ": range overlaps or precedes previous token");
    }
    prev_end = tok.range.end;
    for (std::size_t c = tok.range.start; c < tok.range.end; ++c) covered[c] = true;
  }
  for (std::size_t c = 0; c < text.size(); ++c) {
    if (!covered[c] && !utf8::is_space(text[c])) {
      throw AlignmentError("character " + std::to_string(c) + " not covered by any token");
    }
  }
}

TokenSpan find_minimal_span(const TokenScoring& scoring, utf8::CharRange target) {
  const std::size_t text_len = utf8::length(scoring.text);
  if (target.empty() || target.end > text_len) {
    throw AlignmentError("target [" + std::to_string(target.start) + "," +
                         std::to_string(target.end) + ") outside text of length " +
                         std::to_string(text_len));
  }
  std::optional<std::size_t> first;
  std::size_t last = 0;
  for (std::size_t i = 0; i < scoring.tokens.size(); ++i) {
    const auto& tok = scoring.tokens[i];
    if (tok.special || !tok.range.intersects(target)) continue;
    if (!first) first = i;
    last = i;
  }
  if (!first) {
    throw AlignmentError("no token intersects target [" + std::to_string(target.start) +
                         "," + std::to_string(target.end) + ") in '" + scoring.text + "'");
  }

  TokenSpan span;
  span.first = *first;
  span.last = last;
  span.covered = {scoring.tokens[*first].range.start, scoring.tokens[last].range.end};
  std::size_t inside = 0;
  std::size_t total = 0;
  for (std::size_t i = span.first; i <= span.last; ++i) {
    const auto& tok = scoring.tokens[i];
    if (tok.special) continue;
    total += tok.range.length();
    const std::size_t lo = std::max(tok.range.start, target.start);
    const std::size_t hi = std::min(tok.range.end, target.end);
    if (hi > lo) inside += hi - lo;
  }
  if (inside != target.length()) {
    throw AlignmentError("target [" + std::to_string(target.start) + "," +
                         std::to_string(target.end) + ") has " +
                         std::to_string(target.length() - inside) +
                         " character(s) not covered by any token in '" + scoring.text +
                         "'");
  }
  span.leakage = total - inside;
  return span;
}

utf8::CharRange locate_surface(std::string_view sentence, std::string_view surface,
                               std::size_t occurrence) {
  const std::u32string text = utf8::decode(sentence);
  const std::u32string needle = utf8::decode(surface);
  if (needle.empty()) throw AlignmentError("empty surface");
  std::size_t seen = 0;
  for (std::size_t pos = text.find(needle); pos != std::u32string::npos;
       pos = text.find(needle, pos + 1)) {
    const std::size_t end = pos + needle.size();
    const bool left_ok = pos == 0 || !utf8::is_word_char(text[pos - 1]);
    const bool right_ok = end == text.size() || !utf8::is_word_char(text[end]);
    if (left_ok && right_ok) {
      if (seen == occurrence) return {pos, end};
      ++seen;
    }
  }
  throw AlignmentError("surface '" + std::string(surface) + "' occurrence " +
                       std::to_string(occurrence) + " not found in '" +
                       std::string(sentence) + "'");
}

}  // namespace surpnov
