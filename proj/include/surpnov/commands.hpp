#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "surpnov/backends.hpp"
#include "surpnov/scoring.hpp"
#include "surpnov/stats.hpp"

namespace surpnov {

inline constexpr std::string_view kVersion = "0.1.0";

struct RunConfig {
  std::vector<std::filesystem::path> datasets;
  BackendDescriptor backend;
  HttpOptions http = HttpOptions::from_env();
  std::vector<Method> methods{Method::direct};
  Correction correction = Correction::raw;
  ClozeTemplate cloze_template;
  double threshold = 0.5;
  bool by_genre = false;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
  std::size_t jobs = 4;
  /// correlate: explicit record files; empty means discover them in out_dir.
  std::vector<std::filesystem::path> records;
  /// correlate: perplexity json produced by the perplexity command.
  std::optional<std::filesystem::path> perplexity_file;
  /// correlate: keep only targets whose pos is in this set.
  std::optional<std::set<std::string>> pos_filter;

  nlohmann::ordered_json to_json() const;
};

/// Loads a template file; the id is the file stem.
ClozeTemplate load_template(const std::filesystem::path& path);

/// {dataset}.{model}.{correction}.surprisal.tsv
std::filesystem::path records_path(const RunConfig& config, const std::string& dataset_name);

/// Scores every (item, target, method) not already present in the record
/// file, appending as it goes, then rewrites the file id-sorted. Returns 0
/// only when every item scored; otherwise writes a failure manifest and
/// returns 1.
int cmd_score(const RunConfig& config, const Backend& backend, std::ostream& log);
int cmd_score(const RunConfig& config, std::ostream& log);

/// Writes {dataset}.{model}.{method}.cells.{tsv,md,json} plus a combined
/// {dataset}.summary.md.
int cmd_correlate(const RunConfig& config, std::ostream& log);

/// Writes {dataset}.{model}.perplexity.{json,tsv} with an "All" split and,
/// with by_genre, one split per genre.
int cmd_perplexity(const RunConfig& config, const Backend& backend, std::ostream& log);
int cmd_perplexity(const RunConfig& config, std::ostream& log);

/// Reads the perplexity json written by cmd_perplexity.
std::vector<PerplexityReport> load_perplexity(const std::filesystem::path& path);

int cmd_gains(const std::vector<std::filesystem::path>& base_cells,
              const std::vector<std::filesystem::path>& variant_cells, stats::GainMode mode,
              std::ostream& out);

}  // namespace surpnov
