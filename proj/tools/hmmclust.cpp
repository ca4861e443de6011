// hmmclust: cluster symbol sequences through per-sequence HMMs, cross-likelihood
// distances and normalized spectral embedding.
//
//   hmmclust run [flags]                      full pipeline
//   hmmclust synth|fit|distances|cluster|eval  single stages over --out

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "hmmclust/pipeline.hpp"

namespace {

using hmmclust::PipelineConfig;

/// Command-line values; only the ones given override the config file.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> input;
  std::optional<std::string> format;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> states;
  std::optional<int> symbols;
  std::optional<std::string> alphabet;
  std::optional<double> perturbation;
  std::optional<double> em_tol;
  std::optional<int> em_max_iter;
  std::optional<double> bandwidth;
  std::optional<int> e_dim;
  std::optional<int> k;
  std::optional<int> restarts;
  std::optional<std::size_t> min_length;
  std::optional<int> synth_count;
  std::optional<std::size_t> synth_min_length;
  std::optional<std::size_t> synth_max_length;
  std::optional<std::string> subset;
  std::optional<unsigned> threads;
  bool row_normalize = false;
  bool length_normalize = false;
  bool exact_uniform = false;
  bool quiet = false;
};

void add_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config, "flat key = value config file");
  cmd.add_option("--input", o.input, "cohort file (.jsonl or .csv); omit for a synthetic cohort");
  cmd.add_option("--format", o.format, "cohort format: jsonl or csv");
  cmd.add_option("--out", o.out, "output directory");
  cmd.add_option("--seed", o.seed, "master seed");
  cmd.add_option("--states", o.states, "hidden states per HMM");
  cmd.add_option("--symbols", o.symbols, "alphabet size");
  cmd.add_option("--alphabet", o.alphabet, "comma-separated symbol names");
  cmd.add_option("--perturbation", o.perturbation, "EM init noise in [0, 0.1]");
  cmd.add_option("--em-tol", o.em_tol, "EM convergence tolerance");
  cmd.add_option("--em-max-iter", o.em_max_iter, "EM iteration cap");
  cmd.add_option("--bandwidth", o.bandwidth, "similarity kernel bandwidth");
  cmd.add_option("--e-dim", o.e_dim, "embedding dimension");
  cmd.add_option("--k", o.k, "number of clusters");
  cmd.add_option("--restarts", o.restarts, "k-means restarts");
  cmd.add_option("--min-length", o.min_length, "reject input sequences shorter than this");
  cmd.add_option("--synth-count", o.synth_count, "synthetic sequences per batch");
  cmd.add_option("--synth-min-length", o.synth_min_length, "shortest synthetic sequence");
  cmd.add_option("--synth-max-length", o.synth_max_length, "longest synthetic sequence");
  cmd.add_option("--subset", o.subset, "comma-separated cohort labels for the subset k-means in eval");
  cmd.add_option("--threads", o.threads, "worker threads (0 = all cores)");
  cmd.add_flag("--row-normalize", o.row_normalize, "scale embedding rows to unit length");
  cmd.add_flag("--length-normalize", o.length_normalize, "divide log-likelihoods by sequence length");
  cmd.add_flag("--exact-uniform", o.exact_uniform, "start EM from the exactly uniform HMM");
  cmd.add_flag("--quiet", o.quiet, "no progress output");
}

std::vector<std::string> split_list(const std::string& text) {
  PipelineConfig scratch;
  hmmclust::apply_config_text(scratch, "subset = " + text);
  return scratch.subset;
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c;
  if (o.config) c = hmmclust::load_config_file(*o.config, c);
  if (o.input) c.input = *o.input;
  if (o.format) c.format = *o.format;
  if (o.out) c.out = *o.out;
  if (o.seed) c.master_seed = *o.seed;
  if (o.states) c.n_states = *o.states;
  if (o.symbols) c.n_symbols = *o.symbols;
  if (o.alphabet) c.alphabet = split_list(*o.alphabet);
  if (o.perturbation) c.perturbation = *o.perturbation;
  if (o.em_tol) c.em_tol = *o.em_tol;
  if (o.em_max_iter) c.em_max_iter = *o.em_max_iter;
  if (o.bandwidth) c.bandwidth = *o.bandwidth;
  if (o.e_dim) c.e_dim = *o.e_dim;
  if (o.k) c.k = *o.k;
  if (o.restarts) c.restarts = *o.restarts;
  if (o.min_length) c.min_length = *o.min_length;
  if (o.synth_count) c.synth_count = *o.synth_count;
  if (o.synth_min_length) c.synth_min_length = *o.synth_min_length;
  if (o.synth_max_length) c.synth_max_length = *o.synth_max_length;
  if (o.subset) c.subset = split_list(*o.subset);
  if (o.threads) c.threads = *o.threads;
  if (o.row_normalize) c.row_normalize = true;
  if (o.length_normalize) c.length_normalize = true;
  if (o.exact_uniform) c.exact_uniform = true;
  if (o.quiet) c.progress = false;
  c.validate();
  return c;
}

void print_metrics(const nlohmann::json& metrics) {
  for (const char* part : {"all", "subset"}) {
    if (!metrics.contains(part)) continue;
    const auto& m = metrics[part];
    std::printf("%s: n=%d ari=%.6f purity=%.6f\n", part, m["n"].get<int>(), m["adjusted_rand_index"].get<double>(),
                m["purity"].get<double>());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster symbol sequences by HMM cross-likelihood and spectral embedding"};
  app.require_subcommand(1);
  Overrides overrides;

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"run", "full pipeline: synth (if no input), fit, distances, cluster, eval"},
      {"synth", "write a synthetic PS/PC/NP cohort to <out>/cohort.jsonl"},
      {"fit", "train one HMM per sequence -> models.jsonl"},
      {"distances", "log-likelihood, distance and similarity matrices"},
      {"cluster", "spectral embedding and k-means -> eigenvalues, coordinates, labels"},
      {"eval", "agreement with cohort labels -> metrics.json"},
  };
  for (const auto& command : commands) add_flags(*app.add_subcommand(command.name, command.help), overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = app.exit(e);
    return status == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const PipelineConfig config = resolve(overrides);
    if (name == "run") {
      const auto summary = hmmclust::run_pipeline(config);
      for (const auto& [stage, seconds] : summary.stage_seconds) std::fprintf(stderr, "%-10s %8.2f s\n", stage.c_str(), seconds);
      std::ifstream in(std::filesystem::path(config.out) / "metrics.json");
      if (in) print_metrics(nlohmann::json::parse(in));
      std::printf("manifest %s\n", summary.manifest_digest.c_str());
      return 0;
    }
    auto guarded = [&](auto&& body) {
      try {
        return body();
      } catch (const hmmclust::Error& e) {
        throw hmmclust::StageError(name, e);
      } catch (const std::filesystem::filesystem_error& e) {
        throw hmmclust::StageError(name, hmmclust::InputError(e.what()));
      }
    };
    if (name == "synth") {
      const auto cohort = guarded([&] { return hmmclust::stage_synth(config); });
      std::printf("wrote %zu sequences\n", cohort.size());
    } else if (name == "fit") {
      guarded([&] { hmmclust::stage_fit(config); });
    } else if (name == "distances") {
      guarded([&] { hmmclust::stage_distances(config); });
    } else if (name == "cluster") {
      guarded([&] { hmmclust::stage_cluster(config); });
    } else if (name == "eval") {
      print_metrics(guarded([&] { return hmmclust::stage_eval(config); }));
    }
    return 0;
  } catch (const hmmclust::Error& e) {
    std::fprintf(stderr, "hmmclust %s: %s\n", name.c_str(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hmmclust %s: %s\n", name.c_str(), e.what());
    return 3;
  }
}
