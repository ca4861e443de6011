#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmmclust/distance.hpp"
#include "hmmclust/hmm.hpp"
#include "hmmclust/spectral.hpp"

namespace hmmclust {

/// 12 significant digits, the precision of every exported number.
std::string format_number(double value);

/// FNV-1a 64-bit digest, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

/// Square matrix with an id per row/column; the CSV header is "id,<ids...>"
/// and each row starts with its id.
struct LabeledMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd values;
};

void write_matrix_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                      const Eigen::MatrixXd& values);
LabeledMatrix read_matrix_csv(const std::filesystem::path& path);

/// Rows "id,x1,...,xE".
void write_coordinates_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                           const Eigen::MatrixXd& coordinates);
LabeledMatrix read_coordinates_csv(const std::filesystem::path& path);

/// Rows "index,eigenvalue,eigengap"; the last gap is empty.
void write_eigenvalues_csv(const std::filesystem::path& path, const Eigen::VectorXd& eigenvalues);

/// Rows "id,label".
void write_labels_csv(const std::filesystem::path& path, std::span<const std::string> ids, std::span<const int> labels);
std::map<std::string, int> read_labels_csv(const std::filesystem::path& path);

/// Trained models, one JSON object per line with full double precision.
void write_models_jsonl(const std::filesystem::path& path, std::span<const std::string> ids,
                        std::span<const FitReport<double>> fits);
std::vector<DiscreteHmm<double>> read_models_jsonl(const std::filesystem::path& path,
                                                   std::span<const std::string> expected_ids);

/// Everything the manifest records besides the file digests.
struct ManifestInfo {
  std::size_t n = 0;
  Eigen::Index e_dim = 0;
  int k = 0;
  std::uint64_t seed = 0;
  /// Canonical "key=value" lines of the effective configuration.
  std::string config_text;
  std::string provenance;
  std::vector<std::string> notes;
};

/// Artifact names the manifest knows about, in listing order.
const std::vector<std::string>& artifact_names();

/// Writes manifest.json listing every known artifact present in `dir` with
/// its digest. Returns the manifest document.
nlohmann::json write_manifest(const std::filesystem::path& dir, const ManifestInfo& info);

/// Writes similarity, distance, eigenvalues, coordinates and labels plus the
/// manifest. Creates `dir` if needed; throws ParameterError on inconsistent N.
nlohmann::json export_results(const DistanceSet<double>& dist, const SpectralEmbedding<double>& emb,
                              const ClusterResult<double>& clusters, std::span<const std::string> ids,
                              const std::filesystem::path& dir, ManifestInfo info);

}  // namespace hmmclust
