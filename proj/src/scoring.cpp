#include "surpnov/scoring.hpp"

#include <cmath>

#include "surpnov/error.hpp"
#include "surpnov/stats.hpp"

namespace surpnov {

std::string_view to_string(Method method) {
  return method == Method::direct ? "direct" : "cloze";
}

std::string_view to_string(Correction correction) {
  return correction == Correction::raw ? "raw" : "boundary_corrected";
}

Method parse_method(std::string_view text) {
  if (text == "direct") return Method::direct;
  if (text == "cloze") return Method::cloze;
  throw ScoringError("unknown method '" + std::string(text) + "'");
}

Correction parse_correction(std::string_view text) {
  if (text == "raw") return Correction::raw;
  if (text == "boundary_corrected") return Correction::boundary_corrected;
  throw ScoringError("unknown correction '" + std::string(text) + "'");
}

void ClozeTemplate::check() const {
  for (std::string_view ph : {"{masked}", "{completion}"}) {
    const auto pos = text.find(ph);
    if (pos == std::string::npos) {
      throw ScoringError("cloze template '" + id + "' lacks placeholder " + std::string(ph));
    }
    if (text.find(ph, pos + 1) != std::string::npos) {
      throw ScoringError("cloze template '" + id + "' repeats placeholder " +
                         std::string(ph));
    }
  }
}

double word_surprisal(const TokenScoring& scoring, const TokenSpan& span,
                      Correction correction) {
  if (span.first > span.last || span.last >= scoring.tokens.size()) {
    throw ScoringError("span out of range for scoring of '" + scoring.text + "'");
  }
  stats::NeumaierSum sum;
  for (std::size_t i = span.first; i <= span.last; ++i) {
    if (!scoring.tokens[i].special) sum.add(-scoring.tokens[i].logprob);
  }
  double value = sum.value();
  if (correction == Correction::boundary_corrected) {
    const auto& at_start = scoring.tokens[span.first].boundary_mass;
    std::optional<double> after = scoring.final_boundary_mass;
    for (std::size_t i = span.last + 1; i < scoring.tokens.size(); ++i) {
      if (scoring.tokens[i].special) continue;
      after = scoring.tokens[i].boundary_mass;
      break;
    }
    if (!at_start || !after) {
      throw ScoringError("boundary_corrected surprisal needs boundary masses; backend for '" +
                         scoring.model + "' did not provide them");
    }
    value += -std::log(*after) - (-std::log(*at_start));
  }
  if (!std::isfinite(value) || value < 0.0) {
    throw ScoringError("non-finite or negative surprisal for span in '" + scoring.text + "'");
  }
  return value;
}

namespace {

const TargetAnnotation& target_at(const SentenceItem& item, std::size_t index) {
  if (index >= item.targets.size()) {
    throw ScoringError("item '" + item.id + "' has no target " + std::to_string(index));
  }
  return item.targets[index];
}

SurprisalRecord make_record(const SentenceItem& item, std::size_t index, Method method,
                            const TokenScoring& scoring, utf8::CharRange range,
                            const std::string& model_id, Correction correction) {
  try {
    SurprisalRecord rec;
    rec.item_id = item.id;
    rec.target_index = index;
    rec.surface = item.targets[index].surface;
    rec.method = method;
    rec.model_id = model_id;
    rec.correction = correction;
    rec.span = find_minimal_span(scoring, range);
    rec.surprisal = word_surprisal(scoring, rec.span, correction);
    return rec;
  } catch (const Error& e) {
    throw ScoringError("item '" + item.id + "' target " + std::to_string(index) + ": " +
                       e.what());
  }
}

TokenScoring score_or_throw(const SentenceItem& item, const Backend& backend,
                            std::string_view text) {
  try {
    return backend.score_text(text);
  } catch (const BackendError& e) {
    throw BackendError("item '" + item.id + "': " + e.what(), e.retryable());
  }
}

}  // namespace

std::vector<SurprisalRecord> direct_surprisals(const SentenceItem& item,
                                               const Backend& backend,
                                               Correction correction) {
  const TokenScoring scoring = score_or_throw(item, backend, item.sentence);
  std::vector<SurprisalRecord> out;
  out.reserve(item.targets.size());
  for (std::size_t t = 0; t < item.targets.size(); ++t) {
    out.push_back(make_record(item, t, Method::direct, scoring, item.targets[t].range,
                              backend.descriptor().model_id, correction));
  }
  return out;
}

SurprisalRecord direct_surprisal(const SentenceItem& item, std::size_t target_index,
                                 const Backend& backend, Correction correction) {
  target_at(item, target_index);
  const TokenScoring scoring = score_or_throw(item, backend, item.sentence);
  return make_record(item, target_index, Method::direct, scoring,
                     item.targets[target_index].range, backend.descriptor().model_id,
                     correction);
}

ClozeRendering render_cloze(const SentenceItem& item, std::size_t target_index,
                            const ClozeTemplate& tmpl) {
  tmpl.check();
  const auto& target = target_at(item, target_index);
  const std::u32string sentence = utf8::decode(item.sentence);
  const std::string masked =
      utf8::encode(std::u32string_view(sentence).substr(0, target.range.start)) +
      tmpl.blank + utf8::encode(std::u32string_view(sentence).substr(target.range.end));

  // Fill placeholders left to right so the completion offset is known exactly.
  ClozeRendering out;
  out.template_id = tmpl.id;
  std::string_view rest = tmpl.text;
  while (!rest.empty()) {
    const auto m = rest.find("{masked}");
    const auto c = rest.find("{completion}");
    const auto next = std::min(m, c);
    if (next == std::string_view::npos) {
      out.prompt.append(rest);
      break;
    }
    out.prompt.append(rest.substr(0, next));
    if (next == m) {
      out.prompt += masked;
      rest.remove_prefix(next + 8);
    } else {
      out.completion_start = utf8::length(out.prompt);
      out.prompt += item.sentence;
      rest.remove_prefix(next + 12);
    }
  }
  out.completion_target_range = {out.completion_start + target.range.start,
                                 out.completion_start + target.range.end};
  return out;
}

SurprisalRecord cloze_surprisal(const SentenceItem& item, std::size_t target_index,
                                const Backend& backend, const ClozeTemplate& tmpl,
                                Correction correction) {
  const ClozeRendering rendering = render_cloze(item, target_index, tmpl);
  const TokenScoring scoring = score_or_throw(item, backend, rendering.prompt);
  return make_record(item, target_index, Method::cloze, scoring,
                     rendering.completion_target_range, backend.descriptor().model_id,
                     correction);
}

PerplexityReport perplexity_from_scorings(std::string split_name,
                                          const std::vector<TokenScoring>& scorings) {
  PerplexityReport report;
  report.split_name = std::move(split_name);
  stats::NeumaierSum sum;
  for (const auto& s : scorings) {
    for (const auto& tok : s.tokens) {
      if (tok.special) continue;
      sum.add(-tok.logprob);
      ++report.token_count;
    }
  }
  if (report.token_count == 0) {
    throw ScoringError("perplexity of split '" + report.split_name + "' has no tokens");
  }
  report.mean_token_surprisal = sum.value() / static_cast<double>(report.token_count);
  report.perplexity = std::exp(report.mean_token_surprisal);
  return report;
}

PerplexityReport corpus_perplexity(std::string split_name,
                                   const std::vector<SentenceItem>& items,
                                   const Backend& backend, std::size_t max_in_flight) {
  if (items.empty()) throw ScoringError("corpus_perplexity needs at least one item");
  std::vector<std::string> texts;
  texts.reserve(items.size());
  for (const auto& item : items) texts.push_back(item.sentence);
  BatchResult batch = batch_score(backend, texts, max_in_flight);
  if (!batch.ok()) {
    const auto& f = batch.failures.front();
    throw BackendError("item '" + items[f.index].id + "': " + f.message, f.retryable);
  }
  std::vector<TokenScoring> scorings;
  scorings.reserve(batch.scorings.size());
  for (auto& s : batch.scorings) scorings.push_back(std::move(*s));
  return perplexity_from_scorings(std::move(split_name), scorings);
}

}  // namespace surpnov
