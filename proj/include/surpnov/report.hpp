#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "surpnov/dataset.hpp"
#include "surpnov/scoring.hpp"
#include "surpnov/stats.hpp"

namespace surpnov {

/// Significance level flagged in reports.
inline constexpr double kSignificanceLevel = 0.001;
inline constexpr std::string_view kAllSplit = "All";

struct CorrelationReport {
  std::size_t n = 0;
  std::optional<stats::Correlation> pearson;
  std::optional<stats::Correlation> spearman;
  std::size_t n_novel = 0;
  std::size_t n_conventional = 0;
  std::optional<double> rank_biserial;
  std::optional<double> rank_biserial_p;
  std::optional<double> auc;

  /// 100 * n_novel / (n_novel + n_conventional), when labels are present.
  std::optional<double> novel_percent() const;
  /// True when every reported p-value is below kSignificanceLevel.
  std::optional<bool> significant() const;
};

struct AnalysisCell {
  std::string dataset;
  std::string model;
  Method method = Method::direct;
  Correction correction = Correction::raw;
  std::string genre = std::string(kAllSplit);
  CorrelationReport report;
  std::optional<PerplexityReport> perplexity;
  /// Reasons a statistic could not be computed (single class, zero variance).
  std::vector<std::string> flags;
};

struct CorrelateOptions {
  bool by_genre = false;
  /// Keyed by split name ("All" or a genre); attached to matching cells.
  std::map<std::string, PerplexityReport> perplexity;
};

/// Joins records with their dataset targets and builds one cell per
/// (model, method, correction) and split. Continuous annotations yield r and
/// rho, labels yield r_b and AUC. Each split is recomputed from its own
/// observations. Throws ReportError on records that name unknown items or
/// targets, or on duplicate records.
std::vector<AnalysisCell> correlate(const std::vector<SurprisalRecord>& records,
                                    const Dataset& ds, const CorrelateOptions& options = {});

enum class EmitFormat { tsv, markdown, json };

EmitFormat parse_emit_format(std::string_view text);

/// Human formats print 3 decimals (p-values in scientific notation); json keeps
/// full precision and embeds `metadata`.
std::string emit(const std::vector<AnalysisCell>& cells, EmitFormat format,
                 const nlohmann::ordered_json& metadata = nlohmann::ordered_json::object());

nlohmann::ordered_json cell_to_json(const AnalysisCell& cell);
AnalysisCell cell_from_json(const nlohmann::json& j);

/// Parses the json emission back into cells. Metadata is returned via `metadata`.
std::vector<AnalysisCell> parse_cells_json(std::string_view text,
                                           nlohmann::json* metadata = nullptr);

struct GainRow {
  std::string label;    // variant model + method
  std::string dataset;
  std::string genre;
  double base = 0.0;
  double variant = 0.0;
  double gain = 0.0;
};

/// Rank-biserial gains of `variant` cells over the `base` cells sharing their
/// (dataset, genre, correction). Cells without r_b are skipped.
std::vector<GainRow> compute_gains(const std::vector<AnalysisCell>& base,
                                   const std::vector<AnalysisCell>& variant,
                                   stats::GainMode mode);

/// Grid of signed gains, one row per variant label and one column per dataset.
std::string emit_gains_markdown(const std::vector<GainRow>& rows, stats::GainMode mode);

/// Cell file name: {dataset}.{model}.{method}.cells.{ext}; '/' in model ids
/// becomes "__".
std::string cell_file_name(std::string_view dataset, std::string_view model,
                           Method method, std::string_view ext);
std::string sanitize_model_id(std::string_view model);

}  // namespace surpnov
