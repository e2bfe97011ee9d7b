#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "surpnov/utf8.hpp"

namespace surpnov {

/// One model token. `range` indexes code points of TokenScoring::text.
/// `boundary_mass`, when present, is the probability mass the model assigned
/// at this position to tokens that begin a new word.
struct Token {
  std::string piece;
  utf8::CharRange range;
  double logprob = 0.0;
  bool special = false;
  std::optional<double> boundary_mass;

  friend bool operator==(const Token&, const Token&) = default;
};

/// A model's tokenization of a text with per-token log-probabilities (nats).
struct TokenScoring {
  std::string model;
  std::string text;
  std::vector<Token> tokens;
  /// Word-initial mass at the end-of-text position, for spans that end the text.
  std::optional<double> final_boundary_mass;

  std::size_t content_token_count() const;
  friend bool operator==(const TokenScoring&, const TokenScoring&) = default;
};

/// Throws AlignmentError if token ranges are out of order, overlap, leave a
/// non-whitespace character uncovered, or carry a non-finite/positive logprob.
void validate_scoring(const TokenScoring& scoring);

/// Inclusive token index span covering a target interval.
struct TokenSpan {
  std::size_t first = 0;
  std::size_t last = 0;
  utf8::CharRange covered;
  /// Characters inside the span's tokens but outside the target interval.
  std::size_t leakage = 0;

  std::size_t size() const { return last - first + 1; }
  /// Leakage beyond a leading-space marker plus one fused punctuation mark.
  bool suspicious() const { return leakage > 2; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Minimal contiguous run of non-special tokens whose ranges cover every
/// character of `target`. Throws AlignmentError when the target is out of
/// bounds or some target character lies outside every token.
TokenSpan find_minimal_span(const TokenScoring& scoring, utf8::CharRange target);

/// Interval of the `occurrence`-th (0-based) match of `surface` in `sentence`
/// that sits on word boundaries. Throws AlignmentError when absent.
utf8::CharRange locate_surface(std::string_view sentence, std::string_view surface,
                               std::size_t occurrence);

}  // namespace surpnov
