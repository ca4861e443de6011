#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hmmclust/pipeline.hpp"

namespace hmmclust {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!trim(item).empty()) items.push_back(trim(item));
  return items;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string exact(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

template <typename T>
T parse_integer(const std::string& text) {
  std::size_t used = 0;
  const long long v = std::stoll(text, &used);
  if (used != text.size() || v < 0) throw std::invalid_argument(text);
  return static_cast<T>(v);
}

double parse_real(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument(text);
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument(text);
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"n_states", [](auto& c, auto& v) { c.n_states = parse_integer<int>(v); }},
      {"n_symbols", [](auto& c, auto& v) { c.n_symbols = parse_integer<int>(v); }},
      {"alphabet", [](auto& c, auto& v) { c.alphabet = split_list(v); }},
      {"perturbation", [](auto& c, auto& v) { c.perturbation = parse_real(v); }},
      {"exact_uniform", [](auto& c, auto& v) { c.exact_uniform = parse_bool(v); }},
      {"em_tol", [](auto& c, auto& v) { c.em_tol = parse_real(v); }},
      {"em_max_iter", [](auto& c, auto& v) { c.em_max_iter = parse_integer<int>(v); }},
      {"bandwidth", [](auto& c, auto& v) { c.bandwidth = parse_real(v); }},
      {"e_dim", [](auto& c, auto& v) { c.e_dim = parse_integer<int>(v); }},
      {"k", [](auto& c, auto& v) { c.k = parse_integer<int>(v); }},
      {"restarts", [](auto& c, auto& v) { c.restarts = parse_integer<int>(v); }},
      {"row_normalize", [](auto& c, auto& v) { c.row_normalize = parse_bool(v); }},
      {"length_normalize", [](auto& c, auto& v) { c.length_normalize = parse_bool(v); }},
      {"master_seed", [](auto& c, auto& v) { c.master_seed = parse_integer<std::uint64_t>(v); }},
      {"input", [](auto& c, auto& v) { c.input = v; }},
      {"format", [](auto& c, auto& v) { c.format = v; }},
      {"min_length", [](auto& c, auto& v) { c.min_length = parse_integer<std::size_t>(v); }},
      {"synth_count", [](auto& c, auto& v) { c.synth_count = parse_integer<int>(v); }},
      {"synth_min_length", [](auto& c, auto& v) { c.synth_min_length = parse_integer<std::size_t>(v); }},
      {"synth_max_length", [](auto& c, auto& v) { c.synth_max_length = parse_integer<std::size_t>(v); }},
      {"subset", [](auto& c, auto& v) { c.subset = split_list(v); }},
      {"out", [](auto& c, auto& v) { c.out = v; }},
      {"threads", [](auto& c, auto& v) { c.threads = parse_integer<unsigned>(v); }},
  };
  return table;
}

}  // namespace

std::vector<std::string> PipelineConfig::effective_alphabet() const {
  if (!alphabet.empty()) return alphabet;
  if (n_symbols == 2) return {"s", "c"};
  std::vector<std::string> names;
  for (int i = 0; i < n_symbols; ++i) names.push_back(std::to_string(i));
  return names;
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw ParameterError("config: " + what); };
  if (n_states < 1) fail("n_states must be >= 1");
  if (n_symbols < 2) fail("n_symbols must be >= 2");
  if (!alphabet.empty() && static_cast<int>(alphabet.size()) != n_symbols)
    fail("alphabet has " + std::to_string(alphabet.size()) + " names but n_symbols = " + std::to_string(n_symbols));
  if (!(perturbation >= 0.0 && perturbation <= 0.1)) fail("perturbation must lie in [0, 0.1]");
  if (!(em_tol > 0.0)) fail("em_tol must be positive");
  if (em_max_iter < 1) fail("em_max_iter must be >= 1");
  if (!(bandwidth > 0.0)) fail("bandwidth must be positive");
  if (e_dim < 1) fail("e_dim must be >= 1");
  if (k < 1) fail("k must be >= 1");
  if (restarts < 1) fail("restarts must be >= 1");
  if (min_length < 1) fail("min_length must be >= 1");
  if (synth_count < 1) fail("synth_count must be >= 1");
  if (synth_min_length < 1 || synth_max_length < synth_min_length)
    fail("synthetic length range must satisfy 1 <= synth_min_length <= synth_max_length");
  if (!format.empty()) parse_format(format);
  if (out.empty()) fail("out must name a directory");
}

std::string PipelineConfig::canonical_text() const {
  std::map<std::string, std::string> fields = {
      {"n_states", std::to_string(n_states)},
      {"n_symbols", std::to_string(n_symbols)},
      {"alphabet", join_list(effective_alphabet())},
      {"perturbation", exact(perturbation)},
      {"exact_uniform", exact_uniform ? "true" : "false"},
      {"em_tol", exact(em_tol)},
      {"em_max_iter", std::to_string(em_max_iter)},
      {"bandwidth", exact(bandwidth)},
      {"e_dim", std::to_string(e_dim)},
      {"k", std::to_string(k)},
      {"restarts", std::to_string(restarts)},
      {"row_normalize", row_normalize ? "true" : "false"},
      {"length_normalize", length_normalize ? "true" : "false"},
      {"master_seed", std::to_string(master_seed)},
      {"input", input},
      {"format", format},
      {"min_length", std::to_string(min_length)},
      {"synth_count", std::to_string(synth_count)},
      {"synth_min_length", std::to_string(synth_min_length)},
      {"synth_max_length", std::to_string(synth_max_length)},
      {"subset", join_list(subset)},
  };
  std::string text;
  for (const auto& [key, value] : fields) text += key + "=" + value + "\n";
  return text;
}

void apply_config_text(PipelineConfig& config, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ParameterError(where + ": unknown config key '" + key + "'");
    try {
      it->second(config, value);
    } catch (const std::invalid_argument&) {
      throw ParameterError(where + ": invalid value '" + value + "' for " + key);
    } catch (const std::out_of_range&) {
      throw ParameterError(where + ": value '" + value + "' for " + key + " is out of range");
    }
  }
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(base, text.str(), path.string());
  return base;
}

}  // namespace hmmclust
