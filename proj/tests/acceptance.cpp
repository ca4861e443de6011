// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hmmclust/export.hpp"
#include "hmmclust/pipeline.hpp"
#include "hmmclust/random.hpp"
#include "oracles.hpp"

using namespace hmmclust;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

constexpr std::uint64_t kSuiteSeed = 20240601;

Outcome likelihood_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(derive_seed(kSuiteSeed, 1, 0));
  std::uniform_int_distribution<int> states(1, 3), symbols(2, 3), length(1, 8);
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const int n = states(rng), m = symbols(rng);
    const auto model = oracle::random_model(rng, n, m);
    const auto seq = oracle::random_symbols(rng, static_cast<std::size_t>(length(rng)), m);
    const double fast = forward_log_likelihood(model, std::span<const int>(seq));
    worst = std::max(worst, std::abs(fast - oracle::path_sum_loglik(model, seq)));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-10 && elapsed < 5.0,
          fmt("100 pairs, max |forward - enumeration| = %.3g (tol 1e-10), %.3f s (limit 5 s)", worst, elapsed)};
}

Outcome em_monotonicity() {
  double worst_drop = 0.0, worst_row = 0.0;
  for (int fit = 0; fit < 50; ++fit) {
    std::mt19937_64 rng(derive_seed(kSuiteSeed, 2, static_cast<std::uint64_t>(fit)));
    const auto truth = oracle::random_model(rng, 3, 2);
    const auto seq = sample_sequence(truth, 200, rng(), "m" + std::to_string(fit));
    const auto report = baum_welch_fit(seq, uninformative_init<double>(3, 2, 0.01, rng()));
    for (std::size_t t = 1; t < report.loglik_trace.size(); ++t)
      worst_drop = std::max(worst_drop, report.loglik_trace[t - 1] - report.loglik_trace[t]);
    const auto& model = report.model;
    worst_row = std::max(worst_row, std::abs(model.initial.sum() - 1.0));
    worst_row = std::max(worst_row, (model.transition.rowwise().sum().array() - 1.0).abs().maxCoeff());
    worst_row = std::max(worst_row, (model.emission.rowwise().sum().array() - 1.0).abs().maxCoeff());
    if ((model.transition.array() < 0).any() || (model.emission.array() < 0).any()) worst_row = 1.0;
  }
  return {worst_drop <= 1e-8 && worst_row <= 1e-12,
          fmt("50 fits, largest per-step decrease %.3g (tol 1e-8), max |row sum - 1| %.3g (tol 1e-12)", worst_drop,
              worst_row)};
}

Outcome symmetry_fixed_point() {
  ObservationSequence seq;
  seq.id = "seventy-thirty";
  for (int t = 0; t < 100; ++t) seq.symbols.push_back(t % 10 < 7 ? 0 : 1);
  const auto report = baum_welch_fit(seq, uninformative_init<double>(3, 2, 0.0, 0));
  double emission_err = 0.0;
  for (Eigen::Index i = 0; i < 3; ++i) {
    emission_err = std::max(emission_err, std::abs(report.model.emission(i, 0) - 0.7));
    emission_err = std::max(emission_err, std::abs(report.model.emission(i, 1) - 0.3));
  }
  const double transition_err = (report.model.transition.array() - 1.0 / 3.0).abs().maxCoeff();
  const double expected = 70.0 * std::log(0.7) + 30.0 * std::log(0.3);
  const double loglik_err = std::abs(report.final_loglik() - expected);
  return {report.converged && emission_err <= 1e-9 && transition_err <= 1e-12 && loglik_err <= 1e-8,
          fmt("converged=%s, emission err %.3g (tol 1e-9), transition err %.3g (tol 1e-12), loglik err %.3g "
              "(tol 1e-8)",
              report.converged ? "yes" : "no", emission_err, transition_err, loglik_err)};
}

Outcome generative_recovery() {
  DiscreteHmm<double> truth;
  truth.initial = Eigen::Vector2d(0.5, 0.5);
  truth.transition.resize(2, 2);
  truth.transition << 0.95, 0.05, 0.1, 0.9;
  truth.emission.resize(2, 2);
  truth.emission << 0.9, 0.1, 0.2, 0.8;
  int recovered = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto seed = derive_seed(kSuiteSeed, 4, static_cast<std::uint64_t>(trial));
    const auto seq = sample_sequence(truth, 5000, derive_seed(seed, 0, 0), "r" + std::to_string(trial));
    const auto fit = baum_welch_fit(seq, uninformative_init<double>(2, 2, 0.01, derive_seed(seed, 1, 0)));
    const auto& e = fit.model.emission;
    const double direct = (e - truth.emission).cwiseAbs().maxCoeff();
    const double swapped = (e.colwise().reverse() - truth.emission).cwiseAbs().maxCoeff();
    const double err = std::min(direct, swapped);
    worst = std::max(worst, err);
    if (err <= 0.05) ++recovered;
  }
  return {recovered >= 45, fmt("%d/50 trials within 0.05 of the true emissions (need 45); worst error %.4f",
                               recovered, worst)};
}

Outcome kmeans_oracle() {
  std::mt19937_64 rng(derive_seed(kSuiteSeed, 6, 0));
  std::normal_distribution<double> g(0.0, 1.0);
  int matched = 0;
  double worst = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    Eigen::MatrixXd points(8, 2);
    for (Eigen::Index i = 0; i < points.size(); ++i) points(i) = g(rng);
    const double best = oracle::exhaustive_two_means_inertia(points);
    const auto result = kmeans(points, 2, kDefaultRestarts, rng());
    const double gap = std::abs(result.inertia - best) / std::max(1.0, best);
    worst = std::max(worst, gap);
    if (gap <= 1e-12) ++matched;
  }
  return {matched == 20,
          fmt("%d/20 instances equal the exhaustive 2^8 minimum (relative gap <= 1e-12; worst %.3g)", matched, worst)};
}

PipelineConfig mirror_config(const fs::path& out, unsigned threads) {
  PipelineConfig c;
  c.synth_count = 120;
  c.synth_min_length = 100;
  c.synth_max_length = 300;
  c.subset = {"PS", "PC"};
  c.master_seed = kSuiteSeed;
  c.out = out.string();
  c.threads = threads;
  c.progress = false;
  return c;
}

/// Invariants of one pipeline run, recomputed in memory from the run's cohort
/// and models, plus a check of the exported distance matrix.
Outcome pipeline_invariants(const PipelineConfig& config) {
  const auto cohort = stage_cohort(config);
  const auto ids = cohort.ids();
  const auto models = read_models_jsonl(fs::path(config.out) / "models.jsonl", ids);
  CrossLoglikOptions options;
  options.threads = config.threads;
  const auto set = build_distance_set<double>(models, cohort.sequences, config.bandwidth, options);
  const auto n = set.size();

  const bool d_exact = (set.distance.array() == set.distance.transpose().array()).all() &&
                       (set.distance.diagonal().array() == 0.0).all();
  const auto exported = read_matrix_csv(fs::path(config.out) / "distance.csv").values;
  const bool export_exact = (exported.array() == exported.transpose().array()).all() &&
                            (exported.diagonal().array() == 0.0).all();
  double s_min = 1.0, s_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        s_min = std::min(s_min, set.similarity(i, j));
        s_max = std::max(s_max, set.similarity(i, j));
      }
  const bool s_ok = s_min > 0.0 && s_max <= 1.0;

  const auto z = normalized_affinity(set.similarity, ids);
  const auto dec = eigendecompose(z);
  const double lambda_max = dec.eigenvalues.maxCoeff(), lambda_min = dec.eigenvalues.minCoeff();
  const bool bounds = lambda_max <= 1.0 + 1e-8 && lambda_min >= -1.0 - 1e-8;
  const double lambda1_err = std::abs(dec.eigenvalues(0) - 1.0);
  const Eigen::MatrixXd rebuilt = dec.coordinates * dec.eigenvalues.asDiagonal() * dec.coordinates.transpose();
  const double residual = (z - rebuilt).cwiseAbs().maxCoeff();

  const bool pass = d_exact && export_exact && s_ok && bounds && lambda1_err <= 1e-8 && residual <= 1e-8 && n <= 500;
  return {pass, fmt("N=%d: D symmetric/zero-diagonal %s (export %s); S off-diagonal in [%.3g, %.3g]; "
                    "eigenvalues in [%.12f, %.12f]; |lambda1 - 1| = %.3g; residual %.3g (tol 1e-8)",
                    static_cast<int>(n), d_exact ? "exact" : "NOT exact", export_exact ? "exact" : "NOT exact", s_min,
                    s_max, lambda_min, lambda_max, lambda1_err, residual)};
}

Outcome paper_mirror(const PipelineConfig& config, const RunSummary& summary, double elapsed) {
  const auto metrics = nlohmann::json::parse(slurp(fs::path(config.out) / "metrics.json"));
  const double ari = metrics["subset"]["adjusted_rand_index"].get<double>();
  const int subset_n = metrics["subset"]["n"].get<int>();

  const auto cohort = stage_cohort(config);
  const auto distance = read_matrix_csv(fs::path(config.out) / "distance.csv").values;
  double within = 0.0, cross = 0.0;
  long n_within = 0, n_cross = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& a = *cohort.sequences[i].label;
    if (a != "PS" && a != "PC") continue;
    for (std::size_t j = 0; j < cohort.size(); ++j) {
      const auto& b = *cohort.sequences[j].label;
      if (i == j || (b != "PS" && b != "PC")) continue;
      const double d = distance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (a == b) {
        within += d;
        ++n_within;
      } else {
        cross += d;
        ++n_cross;
      }
    }
  }
  within /= static_cast<double>(n_within);
  cross /= static_cast<double>(n_cross);
  const bool pass = cohort.size() == 360 && subset_n == 240 && ari >= 0.9 && within < cross && elapsed < 600.0;
  return {pass, fmt("N=%zu, PS+PC k-means ARI %.4f (need >= 0.9); mean PS/PC distance within %.3f < cross %.3f; "
                    "%.1f s (limit 600 s); manifest %s",
                    cohort.size(), ari, within, cross, elapsed, summary.manifest_digest.c_str())};
}

Outcome determinism(const fs::path& a, const fs::path& b, unsigned threads_a, unsigned threads_b) {
  int compared = 0, differing = 0;
  std::string first_diff;
  auto names = artifact_names();
  names.push_back("manifest.json");
  for (const auto& name : names) {
    const bool in_a = fs::exists(a / name), in_b = fs::exists(b / name);
    if (!in_a && !in_b) continue;
    ++compared;
    if (in_a != in_b || slurp(a / name) != slurp(b / name)) {
      ++differing;
      if (first_diff.empty()) first_diff = name;
    }
  }
  return {differing == 0 && compared == 11,
          fmt("threads %u vs %u: %d artifacts compared, %d differ%s%s", threads_a, threads_b, compared, differing,
              first_diff.empty() ? "" : ", first: ", first_diff.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "hmmclust_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int number, const char* name, const std::function<Outcome()>& check) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    if (!outcome.pass) ++failures;
    std::printf("%s  %d %-22s %s\n", outcome.pass ? "PASS" : "FAIL", number, name, outcome.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "likelihood oracle", likelihood_oracle);
  report(2, "EM monotonicity", em_monotonicity);
  report(3, "symmetry fixed point", symmetry_fixed_point);
  report(4, "generative recovery", generative_recovery);

  // Criteria 5, 7 and 8 share the scaled synthetic run.
  const auto mirror = mirror_config(work / "threads1", 1);
  RunSummary summary;
  double elapsed = 0.0;
  std::string run_error;
  try {
    const auto start = std::chrono::steady_clock::now();
    summary = run_pipeline(mirror);
    elapsed = seconds_since(start);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto needs_run = [&](auto&& body) {
    return [&, body]() -> Outcome {
      if (!run_error.empty()) return {false, "pipeline run failed: " + run_error};
      return body();
    };
  };

  report(5, "distance invariants", needs_run([&] { return pipeline_invariants(mirror); }));
  report(6, "k-means oracle", kmeans_oracle);
  report(7, "synthetic mirror", needs_run([&] { return paper_mirror(mirror, summary, elapsed); }));
  report(8, "determinism", needs_run([&] {
           const auto other = mirror_config(work / "threads4", 4);
           run_pipeline(other);
           return determinism(mirror.out, other.out, mirror.threads, other.threads);
         }));

  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
