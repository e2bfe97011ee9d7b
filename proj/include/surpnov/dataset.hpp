#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "surpnov/utf8.hpp"

namespace surpnov {

enum class NoveltyLabel { conventional, novel };
enum class Genre { fiction, news, academic, conversation, other };
enum class AnnotationKind { continuous, binary, both };

std::string_view to_string(NoveltyLabel label);
std::string_view to_string(Genre genre);
std::string_view to_string(AnnotationKind kind);
std::optional<NoveltyLabel> parse_label(std::string_view text);
std::optional<Genre> parse_genre(std::string_view text);

/// One annotated word inside a sentence. `range` counts code points.
struct TargetAnnotation {
  std::string surface;
  utf8::CharRange range;
  std::optional<double> novelty_score;
  std::optional<NoveltyLabel> novelty_label;
  std::optional<std::string> pos;

  friend bool operator==(const TargetAnnotation&, const TargetAnnotation&) = default;
};

struct SentenceItem {
  std::string id;
  std::string sentence;
  std::optional<Genre> genre;
  std::vector<TargetAnnotation> targets;

  friend bool operator==(const SentenceItem&, const SentenceItem&) = default;
};

struct Dataset {
  std::string name;
  std::vector<SentenceItem> items;
  AnnotationKind annotation_kind = AnnotationKind::binary;

  std::size_t target_count() const;
  const SentenceItem* find(std::string_view id) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Checks every item-level invariant. Throws DatasetError naming the item.
void validate_item(const SentenceItem& item);

/// Infers the annotation kind from the targets present. Throws when some
/// targets carry only a score and others only a label.
AnnotationKind infer_annotation_kind(const std::vector<SentenceItem>& items);

/// Parses one JSONL record. `line_no` is used in error messages only.
SentenceItem parse_item(std::string_view line, std::size_t line_no);

/// Reads JSONL records. Blank lines are skipped. Errors carry the 1-based
/// line number. Ids must be unique.
Dataset read_dataset(std::istream& in, std::string name);
Dataset load_dataset(const std::filesystem::path& path);

/// Canonical single-line JSON for one item (schema field order, nulls kept).
std::string serialize_item(const SentenceItem& item);
void write_dataset(std::ostream& out, const Dataset& ds);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);

/// Assigns novelty_label = novel iff novelty_score >= threshold. Scores are kept.
Dataset binarize(const Dataset& ds, double threshold);

/// Deterministic Lai2009-shaped corpus: n_items/2 conventional/novel pairs,
/// each sentence ending in its target word followed by a period. Novel
/// sentences carry one extra modifier word.
Dataset synthesize_corpus(std::uint64_t seed, std::size_t n_items);

}  // namespace surpnov
