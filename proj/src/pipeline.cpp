#include "hmmclust/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>

#include "hmmclust/export.hpp"
#include "hmmclust/parallel.hpp"
#include "hmmclust/random.hpp"

namespace hmmclust {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams; changing one changes every artifact downstream of it.
constexpr std::uint64_t kFitStream = 0x666974;
constexpr std::uint64_t kClusterStream = 0x636c7573;
constexpr std::uint64_t kSubsetStream = 0x73756273;

fs::path artifact(const PipelineConfig& config, const std::string& name) { return fs::path(config.out) / name; }

bool synthetic(const PipelineConfig& config) { return config.input.empty(); }

ManifestInfo manifest_info(const PipelineConfig& config, std::size_t n) {
  ManifestInfo info;
  info.n = n;
  info.e_dim = config.e_dim;
  info.k = config.k;
  info.seed = config.master_seed;
  info.config_text = config.canonical_text();
  if (synthetic(config)) {
    info.provenance = "synthetic: batches PS,PC,NP x " + std::to_string(config.synth_count) + ", lengths [" +
                      std::to_string(config.synth_min_length) + ", " + std::to_string(config.synth_max_length) +
                      "], seed " + std::to_string(config.master_seed);
    info.notes.push_back("synthetic sequence lengths are uniform over a stand-in range; no empirical length "
                         "distribution is modelled");
  } else {
    info.provenance = "file: " + config.input;
  }
  if (config.exact_uniform)
    info.notes.push_back("exact uniform EM initialisation: trained models keep all hidden states identical");
  return info;
}

void require_same_ids(const std::vector<std::string>& a, const std::vector<std::string>& b, const std::string& what) {
  if (a != b) throw InputError(what + " does not match the cohort ids; rerun the earlier stages");
}

class ProgressPrinter {
 public:
  explicit ProgressPrinter(std::string label) : label_(std::move(label)) {}
  void operator()(std::size_t done, std::size_t total) {
    const int percent = static_cast<int>(100 * done / total);
    std::lock_guard<std::mutex> lock(mutex_);
    if (percent <= last_) return;
    last_ = percent;
    std::fprintf(stderr, "\r%s: %3d%%", label_.c_str(), percent);
    if (percent == 100) std::fputc('\n', stderr);
    std::fflush(stderr);
  }

 private:
  std::string label_;
  std::mutex mutex_;
  int last_ = -1;
};

}  // namespace

StageError::StageError(std::string stage, const Error& cause)
    : Error(stage + " stage: " + cause.what()), stage_(std::move(stage)), code_(cause.exit_code()) {}

CohortSpec synth_spec(const PipelineConfig& config) {
  if (config.n_symbols != 2)
    throw ParameterError("the synthetic cohort uses a two-symbol alphabet; set n_symbols = 2 or pass --input");
  auto spec = default_cohort_spec(config.synth_count, config.synth_min_length, config.synth_max_length,
                                  config.master_seed);
  spec.alphabet = config.effective_alphabet();
  return spec;
}

std::vector<FitReport<double>> fit_models(const Cohort& cohort, const PipelineConfig& config) {
  if (static_cast<int>(cohort.alphabet.size()) != config.n_symbols)
    throw ParameterError("cohort alphabet has " + std::to_string(cohort.alphabet.size()) + " symbols but n_symbols = " +
                         std::to_string(config.n_symbols));
  const double perturbation = config.exact_uniform ? 0.0 : config.perturbation;
  std::vector<FitReport<double>> fits(cohort.size());
  parallel_for(cohort.size(), config.threads, [&](std::size_t i) {
    const auto init =
        uninformative_init<double>(config.n_states, config.n_symbols, perturbation,
                                   derive_seed(config.master_seed, kFitStream, i));
    fits[i] = baum_welch_fit(cohort.sequences[i], init, config.em_tol, config.em_max_iter);
  });
  return fits;
}

Cohort stage_cohort(const PipelineConfig& config) {
  if (!config.input.empty()) {
    LoadOptions options;
    options.alphabet = config.effective_alphabet();
    options.min_length = config.min_length;
    const auto format = config.format.empty() ? format_from_path(config.input) : parse_format(config.format);
    return load_cohort(config.input, format, options);
  }
  const auto path = artifact(config, "cohort.jsonl");
  if (!fs::exists(path))
    throw InputError("missing artifact '" + path.string() + "'; run the synth stage first or pass --input");
  LoadOptions options;
  options.alphabet = config.effective_alphabet();
  return load_cohort(path, CohortFormat::jsonl, options);
}

Cohort stage_synth(const PipelineConfig& config) {
  config.validate();
  auto cohort = synthesize_cohort(synth_spec(config));
  save_cohort(cohort, artifact(config, "cohort.jsonl"), CohortFormat::jsonl);
  write_manifest(config.out, manifest_info(config, cohort.size()));
  return cohort;
}

void stage_fit(const PipelineConfig& config) {
  config.validate();
  const auto cohort = stage_cohort(config);
  const auto fits = fit_models(cohort, config);
  const auto ids = cohort.ids();
  write_models_jsonl(artifact(config, "models.jsonl"), ids, fits);
  write_manifest(config.out, manifest_info(config, cohort.size()));
}

void stage_distances(const PipelineConfig& config) {
  config.validate();
  const auto cohort = stage_cohort(config);
  const auto ids = cohort.ids();
  const auto models = read_models_jsonl(artifact(config, "models.jsonl"), ids);

  CrossLoglikOptions options;
  options.length_normalize = config.length_normalize;
  options.threads = config.threads;
  ProgressPrinter printer("distances");
  if (config.progress) options.progress = [&printer](std::size_t done, std::size_t total) { printer(done, total); };

  const auto set = build_distance_set<double>(models, cohort.sequences, config.bandwidth, options);
  write_matrix_csv(artifact(config, "loglik.csv"), ids, set.loglik);
  write_matrix_csv(artifact(config, "distance.csv"), ids, set.distance);
  write_matrix_csv(artifact(config, "similarity.csv"), ids, set.similarity);
  write_manifest(config.out, manifest_info(config, cohort.size()));
}

void stage_cluster(const PipelineConfig& config) {
  config.validate();
  DistanceSet<double> set;
  const auto similarity = read_matrix_csv(artifact(config, "similarity.csv"));
  const auto distance = read_matrix_csv(artifact(config, "distance.csv"));
  require_same_ids(distance.ids, similarity.ids, "distance.csv");
  set.similarity = similarity.values;
  set.distance = distance.values;
  const auto& ids = similarity.ids;
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (config.e_dim > n)
    throw ParameterError("e_dim = " + std::to_string(config.e_dim) + " exceeds the cohort size " + std::to_string(n));
  if (config.k > n)
    throw ParameterError("k = " + std::to_string(config.k) + " exceeds the cohort size " + std::to_string(n));

  const auto z = normalized_affinity(set.similarity, ids);
  const auto decomposition = eigendecompose(z);
  const auto embedding = embed(decomposition, config.e_dim, config.row_normalize);
  const auto clusters = kmeans(embedding.coordinates, config.k, config.restarts,
                               derive_seed(config.master_seed, kClusterStream, 0), config.threads);
  export_results(set, embedding, clusters, ids, config.out, manifest_info(config, ids.size()));
}

json stage_eval(const PipelineConfig& config) {
  config.validate();
  const auto cohort = stage_cohort(config);
  if (!cohort.has_labels()) throw InputError("cohort sequences carry no labels; nothing to evaluate against");
  const auto ids = cohort.ids();

  const auto label_map = read_labels_csv(artifact(config, "labels.csv"));
  std::vector<int> clusters;
  clusters.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = label_map.find(id);
    if (it == label_map.end()) throw InputError("labels.csv has no entry for '" + id + "'; rerun the cluster stage");
    clusters.push_back(it->second);
  }

  json metrics{{"all", evaluate_against_labels(clusters, cohort).to_json()}};

  const auto subset_path = artifact(config, "subset_labels.csv");
  if (!config.subset.empty()) {
    const auto coordinates = read_coordinates_csv(artifact(config, "coordinates.csv"));
    require_same_ids(coordinates.ids, ids, "coordinates.csv");
    std::vector<Eigen::Index> rows;
    std::vector<std::string> picked_ids;
    std::vector<std::string> picked_labels;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      const auto& label = *cohort.sequences[i].label;
      if (std::find(config.subset.begin(), config.subset.end(), label) == config.subset.end()) continue;
      rows.push_back(static_cast<Eigen::Index>(i));
      picked_ids.push_back(ids[i]);
      picked_labels.push_back(label);
    }
    if (rows.empty()) throw InputError("no sequence carries a label from the requested subset");
    const Eigen::MatrixXd points = coordinates.values(rows, Eigen::all);
    const auto sub = kmeans(points, config.k, config.restarts, derive_seed(config.master_seed, kSubsetStream, 0),
                            config.threads);
    write_labels_csv(subset_path, picked_ids, sub.labels);
    auto subset_metrics = evaluate_labels(sub.labels, picked_labels).to_json();
    subset_metrics["labels"] = config.subset;
    subset_metrics["inertia"] = sub.inertia;
    metrics["subset"] = subset_metrics;
  } else if (fs::exists(subset_path)) {
    fs::remove(subset_path);
  }

  std::ofstream out(artifact(config, "metrics.json"), std::ios::binary);
  out << metrics.dump(2) << '\n';
  if (!out) throw InputError("cannot write '" + artifact(config, "metrics.json").string() + "'");
  out.close();
  write_manifest(config.out, manifest_info(config, cohort.size()));
  return metrics;
}

RunSummary run_pipeline(const PipelineConfig& config) {
  config.validate();
  fs::create_directories(config.out);
  // Stale artifacts from an earlier run would otherwise leak into the manifest.
  for (const auto& name : artifact_names()) {
    const auto path = artifact(config, name);
    if (!config.input.empty() && fs::exists(config.input) && fs::exists(path) && fs::equivalent(path, config.input))
      continue;
    fs::remove(path);
  }

  RunSummary summary;
  auto stage = [&](const std::string& name, auto&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const Error& e) {
      throw StageError(name, e);
    } catch (const fs::filesystem_error& e) {
      throw StageError(name, InputError(e.what()));
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    summary.stage_seconds.emplace_back(name, elapsed.count());
  };

  if (synthetic(config)) stage("synth", [&] { stage_synth(config); });
  stage("fit", [&] { stage_fit(config); });
  stage("distances", [&] { stage_distances(config); });
  stage("cluster", [&] { stage_cluster(config); });
  bool labelled = false;
  stage("eval", [&] {
    labelled = stage_cohort(config).has_labels();
    if (labelled) stage_eval(config);
  });

  std::ofstream log(artifact(config, "timings.log"));
  for (const auto& [name, seconds] : summary.stage_seconds) log << name << ' ' << seconds << " s\n";
  if (!labelled) log << "eval skipped: cohort is unlabelled\n";

  const auto manifest_path = artifact(config, "manifest.json");
  std::ifstream in(manifest_path);
  summary.manifest = json::parse(in);
  summary.manifest_digest = file_digest(manifest_path);
  return summary;
}

}  // namespace hmmclust
