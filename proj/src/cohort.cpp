#include "hmmclust/cohort.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "hmmclust/random.hpp"

namespace hmmclust {

using nlohmann::json;

std::vector<std::string> Cohort::ids() const {
  std::vector<std::string> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) out.push_back(seq.id);
  return out;
}

bool Cohort::has_labels() const {
  for (const auto& seq : sequences)
    if (!seq.label) return false;
  return !sequences.empty();
}

CohortFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl") return CohortFormat::jsonl;
  if (ext == ".csv") return CohortFormat::csv;
  throw ParameterError("cannot infer cohort format from '" + path.string() + "' (expected .jsonl or .csv)");
}

CohortFormat parse_format(const std::string& name) {
  if (name == "jsonl") return CohortFormat::jsonl;
  if (name == "csv") return CohortFormat::csv;
  throw ParameterError("unknown cohort format '" + name + "' (expected jsonl or csv)");
}

void validate_cohort(const Cohort& cohort) {
  if (cohort.sequences.empty()) throw InputError("no sequences");
  if (cohort.alphabet.size() < 2) throw InputError("alphabet needs at least two symbols");
  std::set<std::string> names(cohort.alphabet.begin(), cohort.alphabet.end());
  if (names.size() != cohort.alphabet.size()) throw InputError("alphabet has duplicate symbol names");

  std::set<std::string> seen;
  const auto m = static_cast<int>(cohort.alphabet.size());
  for (const auto& seq : cohort.sequences) {
    if (seq.symbols.empty()) throw InputError("sequence '" + seq.id + "' is empty");
    for (int s : seq.symbols)
      if (s < 0 || s >= m) throw InputError("sequence '" + seq.id + "' has symbol index " + std::to_string(s) +
                                            " outside the alphabet");
    if (!seen.insert(seq.id).second) throw InputError("duplicate id '" + seq.id + "'");
  }
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  std::istringstream in(text);
  while (std::getline(in, current, sep)) parts.push_back(current);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t") == std::string::npos; }

/// Splits one CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv_record(const std::string& line, const std::string& where) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) throw InputError(where + ": unterminated quoted field");
  return fields;
}

std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

class SymbolTable {
 public:
  explicit SymbolTable(const std::vector<std::string>& alphabet) {
    for (std::size_t i = 0; i < alphabet.size(); ++i) index_[alphabet[i]] = static_cast<int>(i);
  }
  int lookup(const std::string& name, const std::string& where) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InputError(where + ": unknown symbol '" + name + "'");
    return it->second;
  }

 private:
  std::unordered_map<std::string, int> index_;
};

struct RecordSink {
  Cohort& cohort;
  const LoadOptions& options;
  std::set<std::string> seen;

  void add(ObservationSequence seq, const std::string& where) {
    if (seq.id.empty()) throw InputError(where + ": missing id");
    if (seq.symbols.empty()) throw InputError(where + ": sequence '" + seq.id + "' is empty");
    if (seq.symbols.size() < options.min_length)
      throw InputError(where + ": sequence '" + seq.id + "' has length " + std::to_string(seq.symbols.size()) +
                       ", below the minimum " + std::to_string(options.min_length));
    if (!seen.insert(seq.id).second) throw InputError(where + ": duplicate id '" + seq.id + "'");
    cohort.sequences.push_back(std::move(seq));
  }
};

void parse_jsonl(std::istream& in, const LoadOptions& options, const std::string& source, Cohort& cohort) {
  RecordSink sink{cohort, options, {}};
  std::optional<SymbolTable> table;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    line = trim_cr(line);
    if (blank(line)) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!record.is_object()) throw InputError(where + ": expected a JSON object");

    if (record.contains("alphabet")) {
      if (table) throw InputError(where + ": alphabet header must precede all records");
      try {
        cohort.alphabet = record.at("alphabet").get<std::vector<std::string>>();
      } catch (const json::exception&) {
        throw InputError(where + ": alphabet must be an array of strings");
      }
      continue;
    }
    if (!table) {
      if (cohort.alphabet.empty()) cohort.alphabet = options.alphabet;
      if (cohort.alphabet.empty()) throw InputError(where + ": no alphabet declared in file or configuration");
      table.emplace(cohort.alphabet);
    }

    ObservationSequence seq;
    try {
      seq.id = record.at("id").get<std::string>();
      const auto& symbols = record.at("symbols");
      std::vector<std::string> names = symbols.is_string() ? split(symbols.get<std::string>(), ',')
                                                            : symbols.get<std::vector<std::string>>();
      for (const auto& name : names) seq.symbols.push_back(table->lookup(name, where));
      if (record.contains("label") && !record["label"].is_null()) seq.label = record["label"].get<std::string>();
    } catch (const json::exception& e) {
      throw InputError(where + ": malformed record (" + e.what() + ")");
    }
    sink.add(std::move(seq), where);
  }
}

void parse_csv(std::istream& in, const LoadOptions& options, const std::string& source, Cohort& cohort) {
  RecordSink sink{cohort, options, {}};
  std::optional<SymbolTable> table;
  bool header_seen = false;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    line = trim_cr(line);
    if (blank(line)) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.rfind("# alphabet:", 0) == 0) {
      if (header_seen) throw InputError(where + ": alphabet comment must precede the header");
      std::string names = line.substr(11);
      names.erase(0, names.find_first_not_of(' '));
      cohort.alphabet = split(names, ',');
      continue;
    }
    if (line[0] == '#') continue;

    const auto fields = split_csv_record(line, where);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"id", "label", "symbols"})
        throw InputError(where + ": expected header 'id,label,symbols'");
      header_seen = true;
      if (cohort.alphabet.empty()) cohort.alphabet = options.alphabet;
      if (cohort.alphabet.empty()) throw InputError(where + ": no alphabet declared in file or configuration");
      table.emplace(cohort.alphabet);
      continue;
    }
    if (fields.size() != 3) throw InputError(where + ": expected 3 fields, found " + std::to_string(fields.size()));

    ObservationSequence seq;
    seq.id = fields[0];
    if (!fields[1].empty()) seq.label = fields[1];
    if (!fields[2].empty())
      for (const auto& name : split(fields[2], ',')) seq.symbols.push_back(table->lookup(name, where));
    sink.add(std::move(seq), where);
  }
}

}  // namespace

Cohort parse_cohort(std::istream& in, CohortFormat format, const LoadOptions& options, const std::string& source) {
  Cohort cohort;
  cohort.provenance = source;
  if (format == CohortFormat::jsonl)
    parse_jsonl(in, options, source, cohort);
  else
    parse_csv(in, options, source, cohort);
  if (cohort.sequences.empty()) throw InputError(source + ": no sequences");
  validate_cohort(cohort);
  return cohort;
}

Cohort load_cohort(const std::filesystem::path& path, CohortFormat format, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open cohort file '" + path.string() + "'");
  return parse_cohort(in, format, options, path.string());
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path, CohortFormat format) {
  validate_cohort(cohort);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write cohort file '" + path.string() + "'");

  auto names = [&](const ObservationSequence& seq) {
    std::vector<std::string> out_names;
    out_names.reserve(seq.symbols.size());
    for (int s : seq.symbols) out_names.push_back(cohort.alphabet[static_cast<std::size_t>(s)]);
    return out_names;
  };

  if (format == CohortFormat::jsonl) {
    out << json{{"alphabet", cohort.alphabet}}.dump() << '\n';
    for (const auto& seq : cohort.sequences) {
      json record{{"id", seq.id}, {"symbols", names(seq)}};
      if (seq.label) record["label"] = *seq.label;
      out << record.dump() << '\n';
    }
  } else {
    out << "# alphabet: " << join(cohort.alphabet, ',') << '\n' << "id,label,symbols\n";
    for (const auto& seq : cohort.sequences)
      out << quote_csv(seq.id) << ',' << quote_csv(seq.label.value_or("")) << ",\"" << join(names(seq), ',')
          << "\"\n";
  }
  if (!out) throw InputError("failed writing cohort file '" + path.string() + "'");
}

namespace {

DiscreteHmm<double> make_hmm(const Eigen::Vector3d& initial, const Eigen::Matrix3d& transition,
                             const Eigen::Matrix<double, 3, 2>& emission) {
  DiscreteHmm<double> model;
  model.initial = initial;
  model.transition = transition;
  model.emission = emission;
  validate(model);
  return model;
}

}  // namespace

DiscreteHmm<double> science_polarized_generator() {
  Eigen::Matrix3d transition;
  transition << 0.96, 0.03, 0.01,
                0.40, 0.55, 0.05,
                0.50, 0.30, 0.20;
  Eigen::Matrix<double, 3, 2> emission;
  emission << 0.985, 0.015,
              0.90, 0.10,
              0.50, 0.50;
  return make_hmm(Eigen::Vector3d(0.90, 0.08, 0.02), transition, emission);
}

DiscreteHmm<double> conspiracy_polarized_generator() {
  const auto science = science_polarized_generator();
  // reverse state order and swap the two symbols
  Eigen::Matrix3d flip;
  flip << 0, 0, 1,
          0, 1, 0,
          1, 0, 0;
  DiscreteHmm<double> model;
  model.initial = flip * science.initial;
  model.transition = flip * science.transition * flip;
  model.emission = flip * science.emission.rowwise().reverse();
  validate(model);
  return model;
}

DiscreteHmm<double> non_polarized_generator() {
  Eigen::Matrix3d transition;
  // dwell about five steps per regime, so every sequence mixes all three
  transition << 0.80, 0.10, 0.10,
                0.10, 0.80, 0.10,
                0.10, 0.10, 0.80;
  Eigen::Matrix<double, 3, 2> emission;
  emission << 0.97, 0.03,
              0.50, 0.50,
              0.03, 0.97;
  return make_hmm(Eigen::Vector3d(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), transition, emission);
}

CohortSpec default_cohort_spec(int per_batch, std::size_t min_length, std::size_t max_length, std::uint64_t seed) {
  CohortSpec spec;
  spec.alphabet = {"s", "c"};
  spec.seed = seed;
  spec.batches = {
      {"PS", per_batch, science_polarized_generator(), min_length, max_length},
      {"PC", per_batch, conspiracy_polarized_generator(), min_length, max_length},
      {"NP", per_batch, non_polarized_generator(), min_length, max_length},
  };
  return spec;
}

Cohort synthesize_cohort(const CohortSpec& spec) {
  if (spec.batches.empty()) throw ParameterError("cohort spec has no batches");
  Cohort cohort;
  cohort.alphabet = spec.alphabet;
  cohort.provenance = "synthetic cohort, seed " + std::to_string(spec.seed);

  for (std::size_t b = 0; b < spec.batches.size(); ++b) {
    const auto& batch = spec.batches[b];
    if (batch.count < 1) throw ParameterError("batch '" + batch.name + "' must have a positive count");
    if (batch.min_length < 1 || batch.max_length < batch.min_length)
      throw ParameterError("batch '" + batch.name + "' has an invalid length range");
    if (batch.generator.n_symbols() != static_cast<Eigen::Index>(spec.alphabet.size()))
      throw ParameterError("batch '" + batch.name + "' generator does not match the alphabet size");

    const int width = std::max<int>(4, static_cast<int>(std::to_string(batch.count - 1).size()));
    for (int i = 0; i < batch.count; ++i) {
      std::mt19937_64 rng(derive_seed(spec.seed, b, static_cast<std::uint64_t>(i)));
      const auto length = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(batch.min_length),
                                                               static_cast<std::int64_t>(batch.max_length)));
      std::string number = std::to_string(i);
      number.insert(0, static_cast<std::size_t>(width) - std::min<std::size_t>(number.size(), width), '0');
      auto seq = sample_sequence(batch.generator, length, rng(), batch.name + "_" + number);
      seq.label = batch.name;
      cohort.sequences.push_back(std::move(seq));
    }
  }
  validate_cohort(cohort);
  return cohort;
}

}  // namespace hmmclust
