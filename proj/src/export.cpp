#include "hmmclust/export.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hmmclust {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_number(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.12g", value);
  return buffer;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::ofstream open_for_write(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::ifstream open_artifact(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing artifact '" + path.string() + "'; run the stage that produces it first");
  return in;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& text, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw InputError(where + ": '" + text + "' is not a number");
  return value;
}

/// Reads "id,<columns...>" rows below a header; returns ids, header fields and values.
LabeledMatrix read_table(const fs::path& path, std::vector<std::string>& header) {
  auto in = open_artifact(path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file");
  header = split_commas(line);
  if (header.empty() || header[0] != "id") throw InputError(path.string() + ": header must start with 'id'");

  LabeledMatrix table;
  std::vector<std::vector<double>> rows;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split_commas(line);
    if (fields.size() != header.size())
      throw InputError(where + ": expected " + std::to_string(header.size()) + " fields");
    table.ids.push_back(fields[0]);
    std::vector<double>& row = rows.emplace_back();
    for (std::size_t c = 1; c < fields.size(); ++c) row.push_back(parse_number(fields[c], where));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size() - 1));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

}  // namespace

std::string file_digest(const fs::path& path) { return fnv1a_hex(read_file(path)); }

void write_matrix_csv(const fs::path& path, std::span<const std::string> ids, const Eigen::MatrixXd& values) {
  if (values.rows() != values.cols() || static_cast<std::size_t>(values.rows()) != ids.size())
    throw ParameterError("matrix export of '" + path.string() + "': shape does not match the id list");
  auto out = open_for_write(path);
  out << "id";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << ',' << format_number(values(i, j));
    out << '\n';
  }
  finish(out, path);
}

LabeledMatrix read_matrix_csv(const fs::path& path) {
  std::vector<std::string> header;
  auto table = read_table(path, header);
  if (table.values.rows() != table.values.cols()) throw InputError(path.string() + ": matrix is not square");
  for (std::size_t i = 0; i < table.ids.size(); ++i)
    if (header[i + 1] != table.ids[i]) throw InputError(path.string() + ": row and column ids disagree");
  return table;
}

void write_coordinates_csv(const fs::path& path, std::span<const std::string> ids,
                           const Eigen::MatrixXd& coordinates) {
  if (static_cast<std::size_t>(coordinates.rows()) != ids.size())
    throw ParameterError("coordinate export: row count does not match the id list");
  auto out = open_for_write(path);
  out << "id";
  for (Eigen::Index c = 0; c < coordinates.cols(); ++c) out << ",x" << (c + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < coordinates.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < coordinates.cols(); ++c) out << ',' << format_number(coordinates(i, c));
    out << '\n';
  }
  finish(out, path);
}

LabeledMatrix read_coordinates_csv(const fs::path& path) {
  std::vector<std::string> header;
  return read_table(path, header);
}

void write_eigenvalues_csv(const fs::path& path, const Eigen::VectorXd& eigenvalues) {
  const Eigen::VectorXd gaps = eigengaps(eigenvalues);
  auto out = open_for_write(path);
  out << "index,eigenvalue,eigengap\n";
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    out << (i + 1) << ',' << format_number(eigenvalues(i)) << ',';
    if (i < gaps.size()) out << format_number(gaps(i));
    out << '\n';
  }
  finish(out, path);
}

void write_labels_csv(const fs::path& path, std::span<const std::string> ids, std::span<const int> labels) {
  if (ids.size() != labels.size()) throw ParameterError("label export: id and label counts differ");
  auto out = open_for_write(path);
  out << "id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << labels[i] << '\n';
  finish(out, path);
}

std::map<std::string, int> read_labels_csv(const fs::path& path) {
  auto in = open_artifact(path);
  std::string line;
  if (!std::getline(in, line) || line != "id,label") throw InputError(path.string() + ": expected header 'id,label'");
  std::map<std::string, int> labels;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split_commas(line);
    if (fields.size() != 2) throw InputError(where + ": expected 2 fields");
    labels[fields[0]] = static_cast<int>(parse_number(fields[1], where));
  }
  return labels;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(rows.at(i).size()) != c) throw InputError("ragged matrix in models file");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows.at(i).at(j).get<double>();
  }
  return m;
}

}  // namespace

void write_models_jsonl(const fs::path& path, std::span<const std::string> ids,
                        std::span<const FitReport<double>> fits) {
  if (ids.size() != fits.size()) throw ParameterError("model export: id and model counts differ");
  auto out = open_for_write(path);
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& fit = fits[i];
    json record{{"id", ids[i]},
                {"iterations", fit.iterations},
                {"converged", fit.converged},
                {"loglik", fit.final_loglik()},
                {"initial", std::vector<double>(fit.model.initial.data(),
                                                fit.model.initial.data() + fit.model.initial.size())},
                {"transition", matrix_to_json(fit.model.transition)},
                {"emission", matrix_to_json(fit.model.emission)}};
    out << record.dump() << '\n';
  }
  finish(out, path);
}

std::vector<DiscreteHmm<double>> read_models_jsonl(const fs::path& path, std::span<const std::string> expected_ids) {
  auto in = open_artifact(path);
  std::vector<DiscreteHmm<double>> models;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const json record = json::parse(line);
      const auto id = record.at("id").get<std::string>();
      if (models.size() >= expected_ids.size() || expected_ids[models.size()] != id)
        throw InputError(where + ": model '" + id + "' does not match the cohort order");
      DiscreteHmm<double> model;
      const auto initial = record.at("initial").get<std::vector<double>>();
      model.initial = Eigen::Map<const Eigen::VectorXd>(initial.data(), static_cast<Eigen::Index>(initial.size()));
      model.transition = matrix_from_json(record.at("transition"));
      model.emission = matrix_from_json(record.at("emission"));
      validate(model, 1e-9);
      models.push_back(std::move(model));
    } catch (const json::exception& e) {
      throw InputError(where + ": malformed model record (" + e.what() + ")");
    } catch (const ParameterError& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  if (models.size() != expected_ids.size())
    throw InputError(path.string() + ": holds " + std::to_string(models.size()) + " models for " +
                     std::to_string(expected_ids.size()) + " sequences; rerun the fit stage");
  return models;
}

const std::vector<std::string>& artifact_names() {
  static const std::vector<std::string> names = {
      "cohort.jsonl",    "models.jsonl",    "loglik.csv", "distance.csv",      "similarity.csv",
      "eigenvalues.csv", "coordinates.csv", "labels.csv", "subset_labels.csv", "metrics.json"};
  return names;
}

json write_manifest(const fs::path& dir, const ManifestInfo& info) {
  json files = json::array();
  for (const auto& name : artifact_names()) {
    const fs::path path = dir / name;
    if (fs::exists(path)) files.push_back({{"name", name}, {"fnv1a64", file_digest(path)}});
  }
  json config = json::object();
  std::istringstream lines(info.config_text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  json manifest{{"files", files},
                {"n", info.n},
                {"e_dim", info.e_dim},
                {"k", info.k},
                {"seed", info.seed},
                {"config_hash", fnv1a_hex(info.config_text)},
                {"config", config},
                {"provenance", info.provenance},
                {"notes", info.notes}};
  auto out = open_for_write(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  finish(out, dir / "manifest.json");
  return manifest;
}

json export_results(const DistanceSet<double>& dist, const SpectralEmbedding<double>& emb,
                    const ClusterResult<double>& clusters, std::span<const std::string> ids, const fs::path& dir,
                    ManifestInfo info) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (dist.distance.rows() != n || dist.similarity.rows() != n || emb.coordinates.rows() != n ||
      emb.eigenvalues.size() != n || static_cast<Eigen::Index>(clusters.labels.size()) != n)
    throw ParameterError("export_results: inconsistent sizes (ids " + std::to_string(n) + ", distance " +
                         std::to_string(dist.distance.rows()) + ", embedding " +
                         std::to_string(emb.coordinates.rows()) + ", labels " +
                         std::to_string(clusters.labels.size()) + ")");
  fs::create_directories(dir);
  write_matrix_csv(dir / "similarity.csv", ids, dist.similarity);
  write_matrix_csv(dir / "distance.csv", ids, dist.distance);
  write_eigenvalues_csv(dir / "eigenvalues.csv", emb.eigenvalues);
  write_coordinates_csv(dir / "coordinates.csv", ids, emb.coordinates);
  write_labels_csv(dir / "labels.csv", ids, clusters.labels);

  info.n = ids.size();
  info.e_dim = emb.e_dim;
  info.k = static_cast<int>(clusters.centroids.rows());
  return write_manifest(dir, info);
}

}  // namespace hmmclust
