#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "surpnov/alignment.hpp"
#include "surpnov/backends.hpp"
#include "surpnov/dataset.hpp"

namespace surpnov {

enum class Method { direct, cloze };
enum class Correction { raw, boundary_corrected };

std::string_view to_string(Method method);
std::string_view to_string(Correction correction);
Method parse_method(std::string_view text);
Correction parse_correction(std::string_view text);

struct SurprisalRecord {
  std::string item_id;
  std::size_t target_index = 0;
  std::string surface;
  Method method = Method::direct;
  std::string model_id;
  Correction correction = Correction::raw;
  double surprisal = 0.0;  // nats
  TokenSpan span;

  friend bool operator==(const SurprisalRecord&, const SurprisalRecord&) = default;
};

/// Prompt template with {masked} and {completion} placeholders, each used once.
struct ClozeTemplate {
  std::string id = "default";
  std::string text = "Fill in the blank:\n{masked}\n{completion}";
  std::string blank = "____";

  /// Throws ScoringError if a placeholder is missing or repeated.
  void check() const;
};

struct ClozeRendering {
  std::string prompt;
  utf8::CharRange completion_target_range;
  /// Code-point offset of the completion copy inside the prompt.
  std::size_t completion_start = 0;
  std::string template_id;
};

struct PerplexityReport {
  std::string split_name;
  std::size_t token_count = 0;
  double mean_token_surprisal = 0.0;
  double perplexity = 0.0;
};

/// Word surprisal over a token span. Raw mode sums -logprob. Corrected mode
/// adds -ln(boundary mass after the span) and subtracts -ln(boundary mass at
/// the span start), so the word is scored as ending at a word boundary and
/// the space marker's probability is not charged to it.
double word_surprisal(const TokenScoring& scoring, const TokenSpan& span,
                      Correction correction);

/// One backend call per item; one record per target.
std::vector<SurprisalRecord> direct_surprisals(const SentenceItem& item,
                                               const Backend& backend,
                                               Correction correction);
SurprisalRecord direct_surprisal(const SentenceItem& item, std::size_t target_index,
                                 const Backend& backend, Correction correction);

ClozeRendering render_cloze(const SentenceItem& item, std::size_t target_index,
                            const ClozeTemplate& tmpl = {});

SurprisalRecord cloze_surprisal(const SentenceItem& item, std::size_t target_index,
                                const Backend& backend, const ClozeTemplate& tmpl,
                                Correction correction);

/// Token-weighted perplexity over already-computed scorings.
PerplexityReport perplexity_from_scorings(std::string split_name,
                                          const std::vector<TokenScoring>& scorings);

/// Scores each item's sentence independently and pools every content token.
PerplexityReport corpus_perplexity(std::string split_name,
                                   const std::vector<SentenceItem>& items,
                                   const Backend& backend, std::size_t max_in_flight = 4);

}  // namespace surpnov
