#include "surpnov/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "surpnov/error.hpp"

namespace surpnov {

using ojson = nlohmann::ordered_json;

std::string_view to_string(NoveltyLabel label) {
  return label == NoveltyLabel::novel ? "novel" : "conventional";
}

std::string_view to_string(Genre genre) {
  switch (genre) {
    case Genre::fiction: return "fiction";
    case Genre::news: return "news";
    case Genre::academic: return "academic";
    case Genre::conversation: return "conversation";
    case Genre::other: return "other";
  }
  return "other";
}

std::string_view to_string(AnnotationKind kind) {
  switch (kind) {
    case AnnotationKind::continuous: return "continuous";
    case AnnotationKind::binary: return "binary";
    case AnnotationKind::both: return "both";
  }
  return "both";
}

std::optional<NoveltyLabel> parse_label(std::string_view text) {
  if (text == "novel") return NoveltyLabel::novel;
  if (text == "conventional") return NoveltyLabel::conventional;
  return std::nullopt;
}

std::optional<Genre> parse_genre(std::string_view text) {
  for (Genre g : {Genre::fiction, Genre::news, Genre::academic, Genre::conversation,
                  Genre::other}) {
    if (text == to_string(g)) return g;
  }
  return std::nullopt;
}

std::size_t Dataset::target_count() const {
  std::size_t n = 0;
  for (const auto& item : items) n += item.targets.size();
  return n;
}

const SentenceItem* Dataset::find(std::string_view id) const {
  for (const auto& item : items) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

void validate_item(const SentenceItem& item) {
  if (item.id.empty()) throw DatasetError("item with empty id");
  if (item.targets.empty()) {
    throw DatasetError("item '" + item.id + "': no targets");
  }
  const std::u32string sentence = [&] {
    try {
      return utf8::decode(item.sentence);
    } catch (const Error& e) {
      throw DatasetError("item '" + item.id + "': " + e.what());
    }
  }();
  std::vector<utf8::CharRange> ranges;
  for (std::size_t t = 0; t < item.targets.size(); ++t) {
    const auto& target = item.targets[t];
    const std::string where = "item '" + item.id + "' target " + std::to_string(t);
    if (target.range.start >= target.range.end || target.range.end > sentence.size()) {
      throw DatasetError(where + ": range [" + std::to_string(target.range.start) + "," +
                         std::to_string(target.range.end) +
                         ") invalid for sentence of length " +
                         std::to_string(sentence.size()));
    }
    const std::string found = utf8::encode(std::u32string_view(sentence).substr(
        target.range.start, target.range.length()));
    if (found != target.surface) {
      throw DatasetError(where + ": offset mismatch, expected '" + target.surface +
                         "' but range selects '" + found + "'");
    }
    if (!target.novelty_score && !target.novelty_label) {
      throw DatasetError(where + ": neither novelty_score nor novelty_label present");
    }
    if (target.novelty_score) {
      const double s = *target.novelty_score;
      if (!std::isfinite(s) || s <= -1.0 || s >= 1.0) {
        throw DatasetError(where + ": novelty_score " + std::to_string(s) +
                           " outside (-1, +1)");
      }
    }
    ranges.push_back(target.range);
  }
  std::sort(ranges.begin(), ranges.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].start < ranges[i - 1].end) {
      throw DatasetError("item '" + item.id + "': overlapping target ranges");
    }
  }
}

AnnotationKind infer_annotation_kind(const std::vector<SentenceItem>& items) {
  bool all_scored = true;
  bool all_labeled = true;
  for (const auto& item : items) {
    for (const auto& t : item.targets) {
      all_scored = all_scored && t.novelty_score.has_value();
      all_labeled = all_labeled && t.novelty_label.has_value();
    }
  }
  if (all_scored && all_labeled) return AnnotationKind::both;
  if (all_scored) return AnnotationKind::continuous;
  if (all_labeled) return AnnotationKind::binary;
  throw DatasetError(
      "inconsistent annotations: some targets carry only scores, others only labels");
}

namespace {

template <typename T>
std::optional<T> optional_field(const ojson& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->template get<T>();
}

std::size_t offset_field(const ojson& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw DatasetError(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

SentenceItem parse_item(std::string_view line, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no);
  SentenceItem item;
  try {
    const auto j = ojson::parse(line);
    if (!j.is_object()) throw DatasetError("record is not a JSON object");
    item.id = j.at("id").get<std::string>();
    item.sentence = j.at("sentence").get<std::string>();
    if (auto g = optional_field<std::string>(j, "genre")) {
      item.genre = parse_genre(*g);
      if (!item.genre) throw DatasetError("unknown genre '" + *g + "'");
    }
    const auto& targets = j.at("targets");
    if (!targets.is_array()) throw DatasetError("'targets' must be an array");
    for (const auto& t : targets) {
      TargetAnnotation target;
      target.surface = t.at("surface").get<std::string>();
      target.range = {offset_field(t, "start"), offset_field(t, "end")};
      target.novelty_score = optional_field<double>(t, "novelty_score");
      if (auto label = optional_field<std::string>(t, "novelty_label")) {
        target.novelty_label = parse_label(*label);
        if (!target.novelty_label) {
          throw DatasetError("unknown novelty_label '" + *label + "'");
        }
      }
      target.pos = optional_field<std::string>(t, "pos");
      item.targets.push_back(std::move(target));
    }
  } catch (const DatasetError& e) {
    throw DatasetError(where + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(where + ": malformed record: " + e.what());
  }
  try {
    validate_item(item);
  } catch (const DatasetError& e) {
    throw DatasetError(where + ": " + e.what());
  }
  return item;
}

Dataset read_dataset(std::istream& in, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto item = parse_item(line, line_no);
    if (!seen.insert(item.id).second) {
      throw DatasetError("line " + std::to_string(line_no) + ": duplicate id '" +
                         item.id + "'");
    }
    ds.items.push_back(std::move(item));
  }
  ds.annotation_kind = infer_annotation_kind(ds.items);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset '" + path.string() + "'");
  return read_dataset(in, path.stem().string());
}

std::string serialize_item(const SentenceItem& item) {
  ojson j;
  j["id"] = item.id;
  j["sentence"] = item.sentence;
  j["genre"] = item.genre ? ojson(to_string(*item.genre)) : ojson(nullptr);
  j["targets"] = ojson::array();
  for (const auto& t : item.targets) {
    ojson o;
    o["surface"] = t.surface;
    o["start"] = t.range.start;
    o["end"] = t.range.end;
    o["novelty_score"] = t.novelty_score ? ojson(*t.novelty_score) : ojson(nullptr);
    o["novelty_label"] =
        t.novelty_label ? ojson(to_string(*t.novelty_label)) : ojson(nullptr);
    o["pos"] = t.pos ? ojson(*t.pos) : ojson(nullptr);
    j["targets"].push_back(std::move(o));
  }
  return j.dump();
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& item : ds.items) out << serialize_item(item) << '\n';
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset '" + path.string() + "'");
  write_dataset(out, ds);
}

Dataset binarize(const Dataset& ds, double threshold) {
  Dataset out = ds;
  for (auto& item : out.items) {
    for (std::size_t t = 0; t < item.targets.size(); ++t) {
      auto& target = item.targets[t];
      if (!target.novelty_score) {
        throw DatasetError("binarize: item '" + item.id + "' target " +
                           std::to_string(t) + " has no novelty_score");
      }
      target.novelty_label = *target.novelty_score >= threshold ? NoveltyLabel::novel
                                                                : NoveltyLabel::conventional;
    }
  }
  out.annotation_kind = AnnotationKind::both;
  return out;
}

namespace {

constexpr std::array kSubjects = {
    "The writer",  "Her voice",    "The city",      "His memory",  "The market",
    "Our teacher", "The river",    "That argument", "The old house", "My brother",
    "The silence", "Their promise"};
constexpr std::array kVerbs = {"was", "became", "seemed", "remained", "felt like"};
constexpr std::array kModifiers = {"quiet",  "restless", "paper",  "borrowed",
                                   "silver", "crooked",  "folded", "humming"};
constexpr std::array kConventional = {"bridge", "storm",  "weapon", "door",
                                      "mountain", "road", "light",  "wall",
                                      "seed",   "fire",   "journey", "tool",
                                      "mirror", "key",    "wave",   "prison"};
constexpr std::array kNovel = {"cathedral", "lighthouse", "hummingbird", "origami",
                               "metronome", "kaleidoscope", "compass", "glacier",
                               "lantern",   "orchard",    "spiderweb", "accordion",
                               "fossil",    "harbor",     "telescope", "quilt"};
constexpr std::array kGenres = {Genre::fiction, Genre::news, Genre::academic,
                                Genre::conversation};

// std::uniform_*_distribution output differs between standard libraries, so
// draws are mapped by hand to keep corpora byte-identical across platforms.
std::size_t pick(std::mt19937_64& rng, std::size_t n) { return rng() % n; }

double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

SentenceItem make_item(std::string id, Genre genre, std::string prefix,
                       std::string_view target, NoveltyLabel label, double score) {
  SentenceItem item;
  item.id = std::move(id);
  item.genre = genre;
  const std::size_t start = utf8::length(prefix);
  item.sentence = prefix + std::string(target) + ".";
  TargetAnnotation t;
  t.surface = std::string(target);
  t.range = {start, start + utf8::length(target)};
  t.novelty_label = label;
  t.novelty_score = score;
  t.pos = "N";
  item.targets.push_back(std::move(t));
  return item;
}

}  // namespace

Dataset synthesize_corpus(std::uint64_t seed, std::size_t n_items) {
  if (n_items % 2 != 0) {
    throw DatasetError("synthesize_corpus: n_items must be even");
  }
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.name = "synthetic-" + std::to_string(seed);
  ds.annotation_kind = AnnotationKind::both;
  char buf[32];
  for (std::size_t pair = 0; pair < n_items / 2; ++pair) {
    const std::string subject = kSubjects[pick(rng, kSubjects.size())];
    const std::string verb = kVerbs[pick(rng, kVerbs.size())];
    const std::string modifier = kModifiers[pick(rng, kModifiers.size())];
    const std::string_view conventional = kConventional[pick(rng, kConventional.size())];
    const std::string_view novel = kNovel[pick(rng, kNovel.size())];
    // Conventional scores in [-0.9, 0.45), novel in [0.5, 0.95).
    const double conv_score = -0.9 + 1.35 * unit(rng);
    const double novel_score = 0.5 + 0.45 * unit(rng);
    const Genre genre = kGenres[pair % kGenres.size()];

    std::snprintf(buf, sizeof buf, "syn%llu-%04zu-c",
                  static_cast<unsigned long long>(seed), pair);
    ds.items.push_back(make_item(buf, genre, subject + " " + verb + " the ",
                                 conventional, NoveltyLabel::conventional, conv_score));
    std::snprintf(buf, sizeof buf, "syn%llu-%04zu-n",
                  static_cast<unsigned long long>(seed), pair);
    ds.items.push_back(make_item(buf, genre,
                                 subject + " " + verb + " the " + modifier + " ", novel,
                                 NoveltyLabel::novel, novel_score));
  }
  return ds;
}

}  // namespace surpnov
