#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hmmclust/hmm.hpp"

namespace hmmclust {

/// A validated set of symbolized sequences sharing one alphabet.
struct Cohort {
  std::vector<ObservationSequence> sequences;
  std::vector<std::string> alphabet;
  std::string provenance;

  std::size_t size() const { return sequences.size(); }
  std::vector<std::string> ids() const;
  /// True when every sequence carries a label.
  bool has_labels() const;
  bool operator==(const Cohort&) const = default;
};

enum class CohortFormat { jsonl, csv };

/// Picks the format from the file extension (.jsonl / .csv).
CohortFormat format_from_path(const std::filesystem::path& path);
CohortFormat parse_format(const std::string& name);

struct LoadOptions {
  /// Alphabet used when the file does not declare one in a header line.
  std::vector<std::string> alphabet;
  std::size_t min_length = 1;
};

/// Checks alphabet bounds, non-empty sequences and id uniqueness.
void validate_cohort(const Cohort& cohort);

Cohort parse_cohort(std::istream& in, CohortFormat format, const LoadOptions& options,
                    const std::string& source = "<stream>");
Cohort load_cohort(const std::filesystem::path& path, CohortFormat format, const LoadOptions& options = {});
void save_cohort(const Cohort& cohort, const std::filesystem::path& path, CohortFormat format);

struct BatchSpec {
  std::string name;
  int count = 0;
  DiscreteHmm<double> generator;
  std::size_t min_length = 1;
  std::size_t max_length = 1;
};

struct CohortSpec {
  std::vector<BatchSpec> batches;
  std::vector<std::string> alphabet;
  std::uint64_t seed = 0;
};

// Generators for the two-symbol alphabet {s, c}. Hidden states are ordered
// (science-leaning, uncertain, conspiracy-leaning).

/// Dwells mostly in the science-leaning state; expected share of s is about 0.97.
DiscreteHmm<double> science_polarized_generator();
/// Mirror image of the science-polarized generator.
DiscreteHmm<double> conspiracy_polarized_generator();
/// Frequent switching between all three regimes; expected share of s is 0.5.
DiscreteHmm<double> non_polarized_generator();

/// Three batches PS / PC / NP of `per_batch` sequences each, lengths uniform in [min_length, max_length].
CohortSpec default_cohort_spec(int per_batch = 400, std::size_t min_length = 100, std::size_t max_length = 300,
                               std::uint64_t seed = 0);

/// Deterministic in `spec`: the length and symbols of sequence i in batch b are
/// drawn from seeds derived from (spec.seed, b, i).
Cohort synthesize_cohort(const CohortSpec& spec);

}  // namespace hmmclust
