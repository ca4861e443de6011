#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmmclust/cohort.hpp"

namespace hmmclust {

/// Agreement between a clustering and known cohort labels.
struct LabelAgreement {
  std::size_t n = 0;
  double adjusted_rand = 0.0;
  double purity = 0.0;
  /// Distinct cohort labels in first-appearance order (columns of `confusion`).
  std::vector<std::string> classes;
  /// confusion(c, j): members of cluster c carrying classes[j].
  Eigen::MatrixXi confusion;

  nlohmann::json to_json() const;
};

/// Chance-corrected Rand index from pair counts. Two trivial (single-block)
/// partitions score 1.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

LabelAgreement evaluate_labels(std::span<const int> clusters, std::span<const std::string> labels);

/// `clusters[i]` belongs to cohort sequence i. With a subset, only sequences
/// whose label is listed take part. Throws InputError when labels are missing.
LabelAgreement evaluate_against_labels(std::span<const int> clusters, const Cohort& cohort,
                                       const std::optional<std::vector<std::string>>& subset = std::nullopt);

}  // namespace hmmclust
