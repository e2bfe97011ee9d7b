// surpnov: word surprisal of annotated metaphor targets and its correlation
// with novelty annotations.

#include <iostream>

#include <CLI11.hpp>

#include "surpnov/commands.hpp"
#include "surpnov/dataset.hpp"
#include "surpnov/error.hpp"

namespace {

struct Flags {
  std::vector<std::string> datasets;
  std::string backend = "mock";
  std::string model = "mock";
  std::vector<std::string> methods;
  std::string correction = "raw";
  std::string template_file;
  double threshold = 0.5;
  bool genre = false;
  bool bos = true;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t jobs = 4;
  std::vector<std::string> records;
  std::string perplexity;
  std::vector<std::string> pos;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--dataset", f.datasets, "Dataset JSONL file(s)")->required();
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--seed", f.seed, "Seed recorded in manifests");
  cmd->add_option("--threshold", f.threshold, "Novelty threshold for binarization");
  cmd->add_flag("--genre", f.genre, "Also report per-genre splits");
}

void add_backend(CLI::App* cmd, Flags& f) {
  cmd->add_option("--backend", f.backend, "mock | precomputed:PATH | http:URL");
  cmd->add_option("--model", f.model, "Model identifier");
  cmd->add_flag("--bos,!--no-bos", f.bos, "Prepend a beginning-of-sequence token");
  cmd->add_option("--jobs", f.jobs, "Concurrent backend requests")->check(CLI::PositiveNumber);
}

surpnov::RunConfig to_config(const Flags& f) {
  surpnov::RunConfig config;
  for (const auto& d : f.datasets) config.datasets.emplace_back(d);
  config.backend = surpnov::parse_backend_spec(f.backend, f.model, f.bos);
  config.methods.clear();
  for (const auto& m : f.methods) config.methods.push_back(surpnov::parse_method(m));
  if (config.methods.empty()) config.methods.push_back(surpnov::Method::direct);
  config.correction = surpnov::parse_correction(f.correction);
  config.http.request_boundary_mass = config.correction == surpnov::Correction::boundary_corrected;
  if (!f.template_file.empty()) config.cloze_template = surpnov::load_template(f.template_file);
  config.threshold = f.threshold;
  config.by_genre = f.genre;
  config.out_dir = f.out;
  config.seed = f.seed;
  config.jobs = f.jobs;
  for (const auto& r : f.records) config.records.emplace_back(r);
  if (!f.perplexity.empty()) config.perplexity_file = f.perplexity;
  if (!f.pos.empty()) config.pos_filter = std::set<std::string>(f.pos.begin(), f.pos.end());
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surprisal and metaphor novelty toolkit"};
  app.set_version_flag("--version", std::string(surpnov::kVersion));
  app.require_subcommand(1);
  Flags f;

  auto* score = app.add_subcommand("score", "Compute target-word surprisal records");
  add_common(score, f);
  add_backend(score, f);
  score->add_option("--method", f.methods, "direct and/or cloze")
      ->check(CLI::IsMember({"direct", "cloze"}));
  score->add_option("--correction", f.correction, "raw | boundary_corrected")
      ->check(CLI::IsMember({"raw", "boundary_corrected"}));
  score->add_option("--template-file", f.template_file,
                    "Cloze template with {masked} and {completion}");

  auto* correlate = app.add_subcommand("correlate", "Correlate surprisal with novelty");
  add_common(correlate, f);
  correlate->add_option("--records", f.records, "Record TSV file(s); default: discover in --out");
  correlate->add_option("--perplexity", f.perplexity, "Perplexity json to attach to cells");
  correlate->add_option("--pos-filter", f.pos, "Keep only targets with these POS tags");

  auto* perplexity = app.add_subcommand("perplexity", "Token-weighted perplexity per split");
  add_common(perplexity, f);
  add_backend(perplexity, f);

  std::vector<std::string> base_cells, variant_cells;
  std::string gain_mode = "absolute_points";
  auto* gains = app.add_subcommand("gains", "Rank-biserial gain table from cells json");
  gains->add_option("--base", base_cells, "Base cells json")->required();
  gains->add_option("--variant", variant_cells, "Variant cells json")->required();
  gains->add_option("--mode", gain_mode, "relative | absolute_points")
      ->check(CLI::IsMember({"relative", "absolute_points"}));

  std::uint64_t synth_seed = 7;
  std::size_t synth_n = 208;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a deterministic synthetic corpus");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--n", synth_n, "Number of items (even)");
  synth->add_option("--out", synth_out, "Output JSONL file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*score) return surpnov::cmd_score(to_config(f), std::cerr);
    if (*correlate) return surpnov::cmd_correlate(to_config(f), std::cerr);
    if (*perplexity) return surpnov::cmd_perplexity(to_config(f), std::cerr);
    if (*gains) {
      std::vector<std::filesystem::path> b(base_cells.begin(), base_cells.end());
      std::vector<std::filesystem::path> v(variant_cells.begin(), variant_cells.end());
      const auto mode = gain_mode == "relative" ? surpnov::stats::GainMode::relative
                                                : surpnov::stats::GainMode::absolute_points;
      return surpnov::cmd_gains(b, v, mode, std::cout);
    }
    if (*synth) {
      surpnov::save_dataset(synth_out, surpnov::synthesize_corpus(synth_seed, synth_n));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
