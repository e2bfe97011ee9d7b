#include "surpnov/commands.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "surpnov/dataset.hpp"
#include "surpnov/error.hpp"
#include "surpnov/records_io.hpp"
#include "surpnov/report.hpp"

namespace surpnov {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kChunkSize = 64;

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string stem_without(const fs::path& path, std::string_view suffix) {
  std::string name = path.filename().string();
  if (name.ends_with(suffix)) name.resize(name.size() - suffix.size());
  return name;
}

ojson manifest(const RunConfig& config, std::string_view command, const Dataset& ds) {
  ojson j;
  j["tool"] = "surpnov";
  j["version"] = kVersion;
  j["command"] = command;
  j["dataset"] = {{"name", ds.name},
                  {"items", ds.items.size()},
                  {"targets", ds.target_count()},
                  {"annotation_kind", to_string(ds.annotation_kind)}};
  j["config"] = config.to_json();
  return j;
}

using RecordKey = std::tuple<std::string, std::size_t, Method, std::string>;

struct ItemOutcome {
  std::vector<SurprisalRecord> records;
  std::optional<std::string> error;
};

ItemOutcome score_item(const SentenceItem& item, const std::vector<bool>& need_direct,
                       const std::vector<bool>& need_cloze, const RunConfig& config,
                       const Backend& backend) {
  ItemOutcome outcome;
  try {
    if (std::find(need_direct.begin(), need_direct.end(), true) != need_direct.end()) {
      for (auto& rec : direct_surprisals(item, backend, config.correction)) {
        if (need_direct[rec.target_index]) outcome.records.push_back(std::move(rec));
      }
    }
    for (std::size_t t = 0; t < item.targets.size(); ++t) {
      if (need_cloze[t]) {
        outcome.records.push_back(
            cloze_surprisal(item, t, backend, config.cloze_template, config.correction));
      }
    }
  } catch (const std::exception& e) {
    outcome.records.clear();
    outcome.error = e.what();
  }
  return outcome;
}

int score_dataset(const RunConfig& config, const Backend& backend, const Dataset& ds,
                  std::ostream& log) {
  const fs::path path = records_path(config, ds.name);
  const std::string& model = backend.descriptor().model_id;

  std::set<RecordKey> done;
  if (fs::exists(path)) {
    for (const auto& rec : load_records(path)) {
      if (rec.correction != config.correction) {
        throw Error("records file '" + path.string() + "' holds a different correction");
      }
      done.emplace(rec.item_id, rec.target_index, rec.method, rec.model_id);
    }
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << kRecordTsvHeader << '\n';
  }

  const bool want_direct =
      std::find(config.methods.begin(), config.methods.end(), Method::direct) !=
      config.methods.end();
  const bool want_cloze = std::find(config.methods.begin(), config.methods.end(),
                                    Method::cloze) != config.methods.end();

  struct Work {
    const SentenceItem* item;
    std::vector<bool> direct, cloze;
  };
  std::vector<Work> work;
  for (const auto& item : ds.items) {
    Work w{&item, std::vector<bool>(item.targets.size()),
           std::vector<bool>(item.targets.size())};
    bool any = false;
    for (std::size_t t = 0; t < item.targets.size(); ++t) {
      w.direct[t] = want_direct && !done.contains({item.id, t, Method::direct, model});
      w.cloze[t] = want_cloze && !done.contains({item.id, t, Method::cloze, model});
      any = any || w.direct[t] || w.cloze[t];
    }
    if (any) work.push_back(std::move(w));
  }

  std::vector<std::pair<std::string, std::string>> failures;
  std::size_t scored = 0;
  std::size_t suspicious = 0;
  for (std::size_t begin = 0; begin < work.size(); begin += kChunkSize) {
    const std::size_t end = std::min(begin + kChunkSize, work.size());
    std::vector<ItemOutcome> outcomes(end - begin);
    std::atomic<std::size_t> next{begin};
    auto worker = [&] {
      for (std::size_t i = next++; i < end; i = next++) {
        outcomes[i - begin] =
            score_item(*work[i].item, work[i].direct, work[i].cloze, config, backend);
      }
    };
    const std::size_t n_workers = std::min(std::max<std::size_t>(config.jobs, 1), end - begin);
    if (n_workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }

    std::ofstream out(path, std::ios::binary | std::ios::app);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (outcomes[i].error) {
        failures.emplace_back(work[begin + i].item->id, *outcomes[i].error);
        continue;
      }
      for (const auto& rec : outcomes[i].records) {
        if (rec.span.suspicious()) {
          ++suspicious;
          log << "warning: " << rec.item_id << " target " << rec.target_index << " ("
              << to_string(rec.method) << ") span leaks " << rec.span.leakage
              << " characters\n";
        }
        out << to_tsv_row(rec) << '\n';
        ++scored;
      }
    }
    out.flush();
    if (!out) throw Error("failed appending to '" + path.string() + "'");
  }

  auto all = load_records(path);
  sort_records(all);
  std::ostringstream sorted;
  write_records(sorted, all);
  write_file_atomic(path, sorted.str());

  const std::string base = stem_without(path, ".surprisal.tsv");
  ojson m = manifest(config, "score", ds);
  m["records_file"] = path.filename().string();
  write_file_atomic(config.out_dir / (base + ".manifest.json"), m.dump(2) + "\n");

  const fs::path failure_path = config.out_dir / (base + ".failures.json");
  log << ds.name << ": scored " << scored << " new record(s), " << all.size()
      << " total, " << failures.size() << " failed item(s)";
  if (suspicious) log << ", " << suspicious << " span(s) with leakage > 2";
  log << '\n';
  if (failures.empty()) {
    fs::remove(failure_path);
    return 0;
  }
  ojson f;
  f["dataset"] = ds.name;
  f["model"] = model;
  f["failures"] = ojson::array();
  for (const auto& [id, err] : failures) f["failures"].push_back({{"item_id", id}, {"error", err}});
  write_file_atomic(failure_path, f.dump(2) + "\n");
  return 1;
}

}  // namespace

ojson RunConfig::to_json() const {
  ojson j;
  j["backend"] = backend.to_json();
  j["methods"] = ojson::array();
  for (Method m : methods) j["methods"].push_back(to_string(m));
  j["correction"] = to_string(correction);
  j["template"] = {{"id", cloze_template.id},
                   {"text", cloze_template.text},
                   {"blank", cloze_template.blank}};
  j["threshold"] = threshold;
  j["by_genre"] = by_genre;
  j["prepend_bos"] = backend.prepend_bos;
  j["seed"] = seed;
  j["significance_tests"] = {
      {"pearson", "t-test, n-2 df, two-sided"},
      {"spearman", "t-test on ranks, n-2 df, two-sided"},
      {"rank_biserial",
       "Mann-Whitney U, exact permutation when n<=20 else normal approximation with tie "
       "and continuity correction"}};
  if (pos_filter) j["pos_filter"] = *pos_filter;
  return j;
}

ClozeTemplate load_template(const fs::path& path) {
  ClozeTemplate tmpl;
  tmpl.id = path.stem().string();
  tmpl.text = read_file(path);
  // A single trailing newline from the editor is not part of the template.
  if (tmpl.text.ends_with('\n')) tmpl.text.pop_back();
  tmpl.check();
  return tmpl;
}

fs::path records_path(const RunConfig& config, const std::string& dataset_name) {
  return config.out_dir / (dataset_name + "." + sanitize_model_id(config.backend.model_id) +
                           "." + std::string(to_string(config.correction)) +
                           ".surprisal.tsv");
}

int cmd_score(const RunConfig& requested, const Backend& backend, std::ostream& log) {
  // File names and manifests describe the backend actually used.
  RunConfig config = requested;
  config.backend = backend.descriptor();
  if (config.methods.empty()) throw Error("score: at least one method required");
  config.cloze_template.check();
  fs::create_directories(config.out_dir);
  int status = 0;
  for (const auto& p : config.datasets) {
    const Dataset ds = load_dataset(p);
    status = std::max(status, score_dataset(config, backend, ds, log));
  }
  return status;
}

int cmd_score(const RunConfig& config, std::ostream& log) {
  auto backend = make_backend(config.backend, config.http);
  return cmd_score(config, *backend, log);
}

std::vector<PerplexityReport> load_perplexity(const fs::path& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  std::vector<PerplexityReport> out;
  for (const auto& s : j.at("splits")) {
    out.push_back({s.at("split_name").get<std::string>(), s.at("token_count").get<std::size_t>(),
                   s.at("mean_token_surprisal").get<double>(),
                   s.at("perplexity").get<double>()});
  }
  return out;
}

int cmd_correlate(const RunConfig& config, std::ostream& log) {
  fs::create_directories(config.out_dir);
  for (const auto& dpath : config.datasets) {
    Dataset ds = load_dataset(dpath);
    if (ds.annotation_kind != AnnotationKind::binary) ds = binarize(ds, config.threshold);

    std::vector<fs::path> record_files = config.records;
    if (record_files.empty()) {
      for (const auto& entry : fs::directory_iterator(config.out_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with(ds.name + ".") && name.ends_with(".surprisal.tsv")) {
          record_files.push_back(entry.path());
        }
      }
      std::sort(record_files.begin(), record_files.end());
    }
    if (record_files.empty()) {
      throw Error("correlate: no surprisal records found for dataset '" + ds.name + "'");
    }

    std::vector<SurprisalRecord> records;
    ojson sources = ojson::array();
    for (const auto& rpath : record_files) {
      auto recs = load_records(rpath);
      ojson src{{"records_file", rpath.filename().string()}};
      const fs::path mpath =
          rpath.parent_path() / (stem_without(rpath, ".surprisal.tsv") + ".manifest.json");
      if (fs::exists(mpath)) {
        src["score_manifest"] = nlohmann::ordered_json::parse(read_file(mpath));
      }
      sources.push_back(std::move(src));
      records.insert(records.end(), recs.begin(), recs.end());
    }

    if (config.pos_filter) {
      std::erase_if(records, [&](const SurprisalRecord& rec) {
        const SentenceItem* item = ds.find(rec.item_id);
        if (!item || rec.target_index >= item->targets.size()) return false;
        const auto& pos = item->targets[rec.target_index].pos;
        return !pos || !config.pos_filter->contains(*pos);
      });
      if (records.empty()) {
        throw Error("correlate: no records left for dataset '" + ds.name +
                    "' after the POS filter");
      }
    }

    CorrelateOptions options;
    options.by_genre = config.by_genre;
    if (config.perplexity_file) {
      for (auto& rep : load_perplexity(*config.perplexity_file)) {
        options.perplexity.emplace(rep.split_name, rep);
      }
    }
    const auto cells = correlate(records, ds, options);

    ojson metadata = manifest(config, "correlate", ds);
    metadata["sources"] = std::move(sources);

    std::map<std::pair<std::string, Method>, std::vector<AnalysisCell>> by_file;
    for (const auto& c : cells) by_file[{c.model, c.method}].push_back(c);
    for (const auto& [key, group] : by_file) {
      const auto& [model, method] = key;
      write_file_atomic(config.out_dir / cell_file_name(ds.name, model, method, "tsv"),
                        emit(group, EmitFormat::tsv));
      write_file_atomic(config.out_dir / cell_file_name(ds.name, model, method, "md"),
                        emit(group, EmitFormat::markdown));
      write_file_atomic(config.out_dir / cell_file_name(ds.name, model, method, "json"),
                        emit(group, EmitFormat::json, metadata));
    }
    write_file_atomic(config.out_dir / (ds.name + ".summary.md"),
                      emit(cells, EmitFormat::markdown));
    for (const auto& c : cells) {
      for (const auto& flag : c.flags) {
        log << "flag: " << c.dataset << " " << c.model << " " << to_string(c.method) << " "
            << c.genre << ": " << flag << '\n';
      }
    }
    log << ds.name << ": " << cells.size() << " cell(s) from " << records.size()
        << " record(s)\n";
  }
  return 0;
}

int cmd_perplexity(const RunConfig& requested, const Backend& backend, std::ostream& log) {
  RunConfig config = requested;
  config.backend = backend.descriptor();
  fs::create_directories(config.out_dir);
  for (const auto& dpath : config.datasets) {
    const Dataset ds = load_dataset(dpath);
    std::vector<std::pair<std::string, std::vector<SentenceItem>>> splits;
    if (config.by_genre) {
      for (Genre g : {Genre::fiction, Genre::news, Genre::academic, Genre::conversation,
                      Genre::other}) {
        std::vector<SentenceItem> items;
        for (const auto& item : ds.items) {
          if (item.genre == g) items.push_back(item);
        }
        if (!items.empty()) splits.emplace_back(std::string(to_string(g)), std::move(items));
      }
    }
    splits.emplace_back(std::string(kAllSplit), ds.items);

    ojson j = manifest(config, "perplexity", ds);
    j["splits"] = ojson::array();
    std::string tsv = "split\titems\ttoken_count\tmean_token_surprisal\tperplexity\n";
    for (const auto& [name, items] : splits) {
      const auto rep = corpus_perplexity(name, items, backend, config.jobs);
      j["splits"].push_back({{"split_name", rep.split_name},
                             {"items", items.size()},
                             {"token_count", rep.token_count},
                             {"mean_token_surprisal", rep.mean_token_surprisal},
                             {"perplexity", rep.perplexity}});
      char buf[128];
      std::snprintf(buf, sizeof buf, "\t%zu\t%zu\t%.6f\t%.3f\n", items.size(), rep.token_count,
                    rep.mean_token_surprisal, rep.perplexity);
      tsv += name + buf;
      log << ds.name << " " << name << ": perplexity " << rep.perplexity << " over "
          << rep.token_count << " tokens\n";
    }
    const std::string base =
        ds.name + "." + sanitize_model_id(backend.descriptor().model_id) + ".perplexity";
    write_file_atomic(config.out_dir / (base + ".json"), j.dump(2) + "\n");
    write_file_atomic(config.out_dir / (base + ".tsv"), tsv);
  }
  return 0;
}

int cmd_perplexity(const RunConfig& config, std::ostream& log) {
  auto backend = make_backend(config.backend, config.http);
  return cmd_perplexity(config, *backend, log);
}

int cmd_gains(const std::vector<fs::path>& base_cells, const std::vector<fs::path>& variant_cells,
              stats::GainMode mode, std::ostream& out) {
  std::vector<AnalysisCell> base, variant;
  for (const auto& p : base_cells) {
    auto cells = parse_cells_json(read_file(p));
    base.insert(base.end(), cells.begin(), cells.end());
  }
  for (const auto& p : variant_cells) {
    auto cells = parse_cells_json(read_file(p));
    variant.insert(variant.end(), cells.begin(), cells.end());
  }
  out << emit_gains_markdown(compute_gains(base, variant, mode), mode);
  return 0;
}

}  // namespace surpnov
