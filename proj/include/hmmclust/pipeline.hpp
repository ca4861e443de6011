#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmmclust/cohort.hpp"
#include "hmmclust/distance.hpp"
#include "hmmclust/errors.hpp"
#include "hmmclust/hmm.hpp"
#include "hmmclust/metrics.hpp"
#include "hmmclust/spectral.hpp"

namespace hmmclust {

/// Every setting of a pipeline run. The config file uses exactly these field
/// names as keys.
struct PipelineConfig {
  int n_states = 3;
  int n_symbols = 2;
  /// Symbol names; empty means "s,c" for two symbols, else "0,1,...".
  std::vector<std::string> alphabet;
  double perturbation = 0.01;
  /// Forces perturbation 0: every model starts from the exactly uniform HMM.
  bool exact_uniform = false;
  double em_tol = kDefaultEmTolerance;
  int em_max_iter = kDefaultEmMaxIter;
  double bandwidth = kDefaultBandwidth;
  int e_dim = 2;
  int k = 2;
  int restarts = kDefaultRestarts;
  bool row_normalize = false;
  bool length_normalize = false;
  std::uint64_t master_seed = 0;

  /// Cohort file; empty means a synthetic cohort.
  std::string input;
  /// jsonl or csv; empty infers from the extension.
  std::string format;
  std::size_t min_length = 1;
  int synth_count = 400;
  std::size_t synth_min_length = 100;
  std::size_t synth_max_length = 300;
  /// Cohort labels to restrict the evaluation-stage K-means to (e.g. PS,PC).
  std::vector<std::string> subset;

  std::string out = "out";
  // Not part of the canonical config: these never change artifact bytes.
  unsigned threads = 1;
  bool progress = true;

  std::vector<std::string> effective_alphabet() const;
  /// Throws ParameterError for out-of-range fields.
  void validate() const;
  /// Sorted "key=value" lines of every artifact-affecting field.
  std::string canonical_text() const;
};

/// Applies "key = value" lines ('#' starts a comment). Unknown keys and bad
/// values raise ParameterError naming the line.
void apply_config_text(PipelineConfig& config, const std::string& text, const std::string& source = "<config>");
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});

/// Raised when a pipeline stage fails; keeps the exit code of the underlying error.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause);
  const std::string& stage() const { return stage_; }
  int exit_code() const noexcept override { return code_; }

 private:
  std::string stage_;
  int code_;
};

// In-memory building blocks, shared by the stages below and usable directly.

CohortSpec synth_spec(const PipelineConfig& config);
/// One Baum-Welch fit per sequence; init seeds are derived from the master seed and the sequence index.
std::vector<FitReport<double>> fit_models(const Cohort& cohort, const PipelineConfig& config);

// Stages. Each reads prior-stage artifacts from `config.out` and writes its
// own; running them in order yields the same bytes as run_pipeline.

Cohort stage_synth(const PipelineConfig& config);
void stage_fit(const PipelineConfig& config);
void stage_distances(const PipelineConfig& config);
void stage_cluster(const PipelineConfig& config);
/// Returns the metrics document written to metrics.json.
nlohmann::json stage_eval(const PipelineConfig& config);

struct RunSummary {
  nlohmann::json manifest;
  std::string manifest_digest;
  std::vector<std::pair<std::string, double>> stage_seconds;
};

/// synth (when no input) -> fit -> distances -> cluster -> eval (when the cohort is labelled).
/// Per-stage wall times go to timings.log, which is not a manifest artifact.
RunSummary run_pipeline(const PipelineConfig& config);

/// Cohort the fit/distances/eval stages operate on: `input` if set, else out/cohort.jsonl.
Cohort stage_cohort(const PipelineConfig& config);

}  // namespace hmmclust
