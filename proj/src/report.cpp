#include "surpnov/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <tuple>
#include <unordered_map>

#include "surpnov/error.hpp"

namespace surpnov {

using ojson = nlohmann::ordered_json;

std::optional<double> CorrelationReport::novel_percent() const {
  const std::size_t labeled = n_novel + n_conventional;
  if (labeled == 0) return std::nullopt;
  return 100.0 * static_cast<double>(n_novel) / static_cast<double>(labeled);
}

std::optional<bool> CorrelationReport::significant() const {
  std::vector<double> ps;
  if (pearson) ps.push_back(pearson->p);
  if (spearman) ps.push_back(spearman->p);
  if (rank_biserial_p) ps.push_back(*rank_biserial_p);
  if (ps.empty()) return std::nullopt;
  return std::all_of(ps.begin(), ps.end(), [](double p) { return p < kSignificanceLevel; });
}

namespace {

struct Observation {
  double surprisal;
  std::optional<double> score;
  std::optional<NoveltyLabel> label;
};

CorrelationReport summarize(const std::vector<Observation>& obs,
                            std::vector<std::string>& flags) {
  CorrelationReport rep;
  rep.n = obs.size();
  const bool all_scored =
      !obs.empty() && std::all_of(obs.begin(), obs.end(),
                                  [](const auto& o) { return o.score.has_value(); });
  const bool all_labeled =
      !obs.empty() && std::all_of(obs.begin(), obs.end(),
                                  [](const auto& o) { return o.label.has_value(); });
  if (obs.empty()) flags.emplace_back("no observations");

  if (all_scored) {
    std::vector<double> s, y;
    for (const auto& o : obs) {
      s.push_back(o.surprisal);
      y.push_back(*o.score);
    }
    try {
      rep.pearson = stats::pearson(s, y);
      rep.spearman = stats::spearman(s, y);
    } catch (const StatsError& e) {
      flags.push_back(std::string("correlation undefined: ") + e.what());
    }
  }
  if (all_labeled) {
    std::vector<double> novel, conventional;
    for (const auto& o : obs) {
      (*o.label == NoveltyLabel::novel ? novel : conventional).push_back(o.surprisal);
    }
    rep.n_novel = novel.size();
    rep.n_conventional = conventional.size();
    if (novel.empty() || conventional.empty()) {
      flags.emplace_back("single class: rank-biserial undefined");
    } else {
      const auto mw = stats::mann_whitney(novel, conventional);
      rep.rank_biserial = mw.rank_biserial;
      rep.rank_biserial_p = mw.p;
      rep.auc = mw.auc;
    }
  }
  return rep;
}

}  // namespace

std::vector<AnalysisCell> correlate(const std::vector<SurprisalRecord>& records,
                                    const Dataset& ds, const CorrelateOptions& options) {
  std::unordered_map<std::string, const SentenceItem*> by_id;
  for (const auto& item : ds.items) by_id.emplace(item.id, &item);

  using GroupKey = std::tuple<std::string, Method, Correction>;
  struct Joined {
    const SentenceItem* item;
    Observation obs;
  };
  std::map<GroupKey, std::vector<Joined>> groups;
  std::set<std::tuple<std::string, Method, Correction, std::string, std::size_t>> seen;

  for (const auto& rec : records) {
    auto it = by_id.find(rec.item_id);
    if (it == by_id.end()) {
      throw ReportError("record for unknown item '" + rec.item_id + "' in dataset '" +
                        ds.name + "'");
    }
    const SentenceItem& item = *it->second;
    if (rec.target_index >= item.targets.size()) {
      throw ReportError("record for item '" + rec.item_id + "' names target " +
                        std::to_string(rec.target_index) + " but the item has " +
                        std::to_string(item.targets.size()));
    }
    if (!seen.emplace(rec.model_id, rec.method, rec.correction, rec.item_id, rec.target_index)
             .second) {
      throw ReportError("duplicate record for item '" + rec.item_id + "' target " +
                        std::to_string(rec.target_index));
    }
    const auto& target = item.targets[rec.target_index];
    groups[{rec.model_id, rec.method, rec.correction}].push_back(
        {&item, {rec.surprisal, target.novelty_score, target.novelty_label}});
  }

  std::vector<AnalysisCell> cells;
  for (const auto& [key, joined] : groups) {
    std::vector<std::pair<std::string, std::vector<Observation>>> splits;
    if (options.by_genre) {
      for (Genre g : {Genre::fiction, Genre::news, Genre::academic, Genre::conversation,
                      Genre::other}) {
        std::vector<Observation> obs;
        for (const auto& j : joined) {
          if (j.item->genre == g) obs.push_back(j.obs);
        }
        if (!obs.empty()) splits.emplace_back(std::string(to_string(g)), std::move(obs));
      }
    }
    std::vector<Observation> all;
    for (const auto& j : joined) all.push_back(j.obs);
    splits.emplace_back(std::string(kAllSplit), std::move(all));

    for (auto& [split, obs] : splits) {
      AnalysisCell cell;
      cell.dataset = ds.name;
      cell.model = std::get<0>(key);
      cell.method = std::get<1>(key);
      cell.correction = std::get<2>(key);
      cell.genre = split;
      cell.report = summarize(obs, cell.flags);
      if (auto p = options.perplexity.find(split); p != options.perplexity.end()) {
        cell.perplexity = p->second;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

EmitFormat parse_emit_format(std::string_view text) {
  if (text == "tsv") return EmitFormat::tsv;
  if (text == "markdown" || text == "md") return EmitFormat::markdown;
  if (text == "json") return EmitFormat::json;
  throw ReportError("unknown output format '" + std::string(text) + "'");
}

namespace {

std::string fixed3(std::optional<double> v) {
  if (!v) return "-";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

std::string pvalue(std::optional<double> v) {
  if (!v) return "-";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3e", *v);
  return buf;
}

std::optional<double> coef(const std::optional<stats::Correlation>& c) {
  return c ? std::optional<double>(c->coefficient) : std::nullopt;
}

std::optional<double> pval(const std::optional<stats::Correlation>& c) {
  return c ? std::optional<double>(c->p) : std::nullopt;
}

std::optional<double> ppl(const AnalysisCell& cell) {
  return cell.perplexity ? std::optional<double>(cell.perplexity->perplexity) : std::nullopt;
}

std::string yes_no(std::optional<bool> b) {
  if (!b) return "-";
  return *b ? "yes" : "no";
}

std::string join_flags(const std::vector<std::string>& flags) {
  std::string out;
  for (const auto& f : flags) {
    if (!out.empty()) out += "; ";
    out += f;
  }
  return out.empty() ? "-" : out;
}

std::string emit_tsv(const std::vector<AnalysisCell>& cells) {
  std::string out =
      "dataset\tmodel\tmethod\tcorrection\tgenre\tn\tr\tr_p\trho\trho_p\tn_novel\t"
      "n_conventional\tnov_pct\tr_b\tr_b_p\tauc\tppl\tsig_001\tflags\n";
  for (const auto& c : cells) {
    const auto& r = c.report;
    const std::vector<std::string> cols = {
        c.dataset, c.model, std::string(to_string(c.method)),
        std::string(to_string(c.correction)), c.genre, std::to_string(r.n),
        fixed3(coef(r.pearson)), pvalue(pval(r.pearson)), fixed3(coef(r.spearman)),
        pvalue(pval(r.spearman)), std::to_string(r.n_novel), std::to_string(r.n_conventional),
        fixed3(r.novel_percent()), fixed3(r.rank_biserial), pvalue(r.rank_biserial_p),
        fixed3(r.auc), fixed3(ppl(c)), yes_no(r.significant()), join_flags(c.flags)};
    for (std::size_t i = 0; i < cols.size(); ++i) {
      out += (i ? "\t" : "") + cols[i];
    }
    out += '\n';
  }
  return out;
}

std::string emit_markdown(const std::vector<AnalysisCell>& cells) {
  std::string out =
      "| dataset | model | method | genre | n | r | rho | r_b | auc | nov % | ppl | p<.001 |\n"
      "|---|---|---|---|---:|---:|---:|---:|---:|---:|---:|:---:|\n";
  for (const auto& c : cells) {
    const auto& r = c.report;
    out += "| " + c.dataset + " | " + c.model + " | " + std::string(to_string(c.method)) +
           " | " + c.genre + " | " + std::to_string(r.n) + " | " + fixed3(coef(r.pearson)) +
           " | " + fixed3(coef(r.spearman)) + " | " + fixed3(r.rank_biserial) + " | " +
           fixed3(r.auc) + " | " + fixed3(r.novel_percent()) + " | " + fixed3(ppl(c)) +
           " | " + yes_no(r.significant()) + " |\n";
  }
  return out;
}

ojson correlation_json(const std::optional<stats::Correlation>& c) {
  if (!c) return nullptr;
  return ojson{{"coefficient", c->coefficient}, {"p", c->p}, {"n", c->n}};
}

std::optional<stats::Correlation> correlation_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return stats::Correlation{j.at("coefficient").get<double>(), j.at("p").get<double>(),
                            j.at("n").get<std::size_t>()};
}

template <typename T>
ojson opt_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

ojson cell_to_json(const AnalysisCell& cell) {
  const auto& r = cell.report;
  ojson j;
  j["dataset"] = cell.dataset;
  j["model"] = cell.model;
  j["method"] = to_string(cell.method);
  j["correction"] = to_string(cell.correction);
  j["genre"] = cell.genre;
  j["n"] = r.n;
  j["pearson"] = correlation_json(r.pearson);
  j["spearman"] = correlation_json(r.spearman);
  j["n_novel"] = r.n_novel;
  j["n_conventional"] = r.n_conventional;
  j["rank_biserial"] = opt_json(r.rank_biserial);
  j["rank_biserial_p"] = opt_json(r.rank_biserial_p);
  j["auc"] = opt_json(r.auc);
  if (cell.perplexity) {
    j["perplexity"] = {{"split_name", cell.perplexity->split_name},
                       {"token_count", cell.perplexity->token_count},
                       {"mean_token_surprisal", cell.perplexity->mean_token_surprisal},
                       {"perplexity", cell.perplexity->perplexity}};
  } else {
    j["perplexity"] = nullptr;
  }
  j["flags"] = cell.flags;
  return j;
}

AnalysisCell cell_from_json(const nlohmann::json& j) {
  try {
    AnalysisCell cell;
    cell.dataset = j.at("dataset").get<std::string>();
    cell.model = j.at("model").get<std::string>();
    cell.method = parse_method(j.at("method").get<std::string>());
    cell.correction = parse_correction(j.at("correction").get<std::string>());
    cell.genre = j.at("genre").get<std::string>();
    auto& r = cell.report;
    r.n = j.at("n").get<std::size_t>();
    r.pearson = correlation_from(j.at("pearson"));
    r.spearman = correlation_from(j.at("spearman"));
    r.n_novel = j.at("n_novel").get<std::size_t>();
    r.n_conventional = j.at("n_conventional").get<std::size_t>();
    r.rank_biserial = opt_double(j, "rank_biserial");
    r.rank_biserial_p = opt_double(j, "rank_biserial_p");
    r.auc = opt_double(j, "auc");
    if (const auto& p = j.at("perplexity"); !p.is_null()) {
      cell.perplexity = PerplexityReport{
          p.at("split_name").get<std::string>(), p.at("token_count").get<std::size_t>(),
          p.at("mean_token_surprisal").get<double>(), p.at("perplexity").get<double>()};
    }
    cell.flags = j.at("flags").get<std::vector<std::string>>();
    return cell;
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(std::string("malformed cell: ") + e.what());
  }
}

std::string emit(const std::vector<AnalysisCell>& cells, EmitFormat format,
                 const ojson& metadata) {
  switch (format) {
    case EmitFormat::tsv: return emit_tsv(cells);
    case EmitFormat::markdown: return emit_markdown(cells);
    case EmitFormat::json: {
      ojson j;
      j["metadata"] = metadata;
      j["cells"] = ojson::array();
      for (const auto& c : cells) j["cells"].push_back(cell_to_json(c));
      return j.dump(2) + "\n";
    }
  }
  return {};
}

std::vector<AnalysisCell> parse_cells_json(std::string_view text, nlohmann::json* metadata) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(std::string("malformed cells json: ") + e.what());
  }
  if (metadata) *metadata = j.value("metadata", nlohmann::json::object());
  std::vector<AnalysisCell> cells;
  for (const auto& c : j.at("cells")) cells.push_back(cell_from_json(c));
  return cells;
}

std::vector<GainRow> compute_gains(const std::vector<AnalysisCell>& base,
                                   const std::vector<AnalysisCell>& variant,
                                   stats::GainMode mode) {
  std::vector<GainRow> rows;
  for (const auto& v : variant) {
    if (!v.report.rank_biserial) continue;
    for (const auto& b : base) {
      if (b.dataset != v.dataset || b.genre != v.genre || b.correction != v.correction ||
          !b.report.rank_biserial) {
        continue;
      }
      GainRow row;
      row.label = v.model + " " + std::string(to_string(v.method));
      row.dataset = v.dataset;
      row.genre = v.genre;
      row.base = *b.report.rank_biserial;
      row.variant = *v.report.rank_biserial;
      row.gain = stats::gain_percent(row.base, row.variant, mode);
      rows.push_back(std::move(row));
      break;
    }
  }
  return rows;
}

std::string emit_gains_markdown(const std::vector<GainRow>& rows, stats::GainMode mode) {
  std::vector<std::string> labels, datasets;
  for (const auto& r : rows) {
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
  }
  std::string out = std::string("<!-- r_b gain, ") +
                    (mode == stats::GainMode::relative ? "relative %" : "percentage points") +
                    " -->\n| model |";
  for (const auto& d : datasets) out += " " + d + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < datasets.size(); ++i) out += "---:|";
  out += '\n';
  for (const auto& label : labels) {
    out += "| " + label + " |";
    for (const auto& d : datasets) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const GainRow& r) {
        return r.label == label && r.dataset == d && r.genre == kAllSplit;
      });
      if (it == rows.end()) {
        out += " - |";
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+.1f", it->gain);
        out += std::string(" ") + buf + " |";
      }
    }
    out += '\n';
  }
  return out;
}

std::string sanitize_model_id(std::string_view model) {
  std::string out;
  for (char c : model) {
    if (c == '/') {
      out += "__";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string cell_file_name(std::string_view dataset, std::string_view model, Method method,
                           std::string_view ext) {
  return std::string(dataset) + "." + sanitize_model_id(model) + "." +
         std::string(to_string(method)) + ".cells." + std::string(ext);
}

}  // namespace surpnov
