#include "hmmclust/metrics.hpp"

#include <algorithm>
#include <map>

namespace hmmclust {

namespace {

double pairs(double n) { return n * (n - 1.0) / 2.0; }

std::vector<int> dense_codes(std::span<const int> raw, int& distinct) {
  std::map<int, int> code;
  std::vector<int> out;
  out.reserve(raw.size());
  for (int v : raw) out.push_back(code.try_emplace(v, static_cast<int>(code.size())).first->second);
  distinct = static_cast<int>(code.size());
  return out;
}

}  // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ParameterError("adjusted_rand_index: partitions differ in size");
  if (a.empty()) throw ParameterError("adjusted_rand_index: empty partitions");
  int ka = 0;
  int kb = 0;
  const auto ca = dense_codes(a, ka);
  const auto cb = dense_codes(b, kb);

  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
  for (std::size_t i = 0; i < ca.size(); ++i) table(ca[i], cb[i]) += 1.0;

  double index = 0.0;
  for (Eigen::Index i = 0; i < table.size(); ++i) index += pairs(table.data()[i]);
  double row_pairs = 0.0;
  for (Eigen::Index i = 0; i < ka; ++i) row_pairs += pairs(table.row(i).sum());
  double col_pairs = 0.0;
  for (Eigen::Index j = 0; j < kb; ++j) col_pairs += pairs(table.col(j).sum());

  const double total = pairs(static_cast<double>(a.size()));
  const double expected = row_pairs * col_pairs / total;
  const double maximum = 0.5 * (row_pairs + col_pairs);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

LabelAgreement evaluate_labels(std::span<const int> clusters, std::span<const std::string> labels) {
  if (clusters.size() != labels.size()) throw ParameterError("cluster and label counts differ");
  if (clusters.empty()) throw InputError("nothing to evaluate: no labelled items selected");

  LabelAgreement out;
  out.n = clusters.size();
  std::vector<int> label_codes;
  label_codes.reserve(labels.size());
  for (const auto& label : labels) {
    auto it = std::find(out.classes.begin(), out.classes.end(), label);
    if (it == out.classes.end()) it = out.classes.insert(out.classes.end(), label);
    label_codes.push_back(static_cast<int>(it - out.classes.begin()));
  }

  const int k = *std::max_element(clusters.begin(), clusters.end()) + 1;
  if (*std::min_element(clusters.begin(), clusters.end()) < 0) throw ParameterError("negative cluster index");
  out.confusion = Eigen::MatrixXi::Zero(k, static_cast<Eigen::Index>(out.classes.size()));
  for (std::size_t i = 0; i < clusters.size(); ++i) out.confusion(clusters[i], label_codes[i]) += 1;

  out.purity = static_cast<double>(out.confusion.rowwise().maxCoeff().sum()) / static_cast<double>(out.n);
  out.adjusted_rand = adjusted_rand_index(clusters, label_codes);
  return out;
}

LabelAgreement evaluate_against_labels(std::span<const int> clusters, const Cohort& cohort,
                                       const std::optional<std::vector<std::string>>& subset) {
  if (clusters.size() != cohort.size()) throw ParameterError("cluster labels do not cover the cohort");
  std::vector<int> picked;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& seq = cohort.sequences[i];
    if (!seq.label) throw InputError("sequence '" + seq.id + "' has no label to evaluate against");
    if (subset && std::find(subset->begin(), subset->end(), *seq.label) == subset->end()) continue;
    picked.push_back(clusters[i]);
    labels.push_back(*seq.label);
  }
  return evaluate_labels(picked, labels);
}

nlohmann::json LabelAgreement::to_json() const {
  nlohmann::json table = nlohmann::json::array();
  for (Eigen::Index c = 0; c < confusion.rows(); ++c) {
    nlohmann::json row = nlohmann::json::object();
    for (Eigen::Index j = 0; j < confusion.cols(); ++j) row[classes[static_cast<std::size_t>(j)]] = confusion(c, j);
    table.push_back(std::move(row));
  }
  return {{"n", n}, {"adjusted_rand_index", adjusted_rand}, {"purity", purity}, {"confusion", table}};
}

}  // namespace hmmclust
