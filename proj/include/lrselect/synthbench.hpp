#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrselect/corpus.hpp"
#include "lrselect/scoring.hpp"
#include "lrselect/selection.hpp"

namespace lrselect {

struct MixtureComponentSpec {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> variance;
};

/// One synthetic domain: frames are drawn from a diagonal Gaussian mixture.
struct DomainSpec {
  std::string name;
  std::vector<MixtureComponentSpec> mixture;
  std::size_t utterance_count = 1;
  std::uint32_t min_frames = 1;
  std::uint32_t max_frames = 1;
  std::uint64_t seed_offset = 0;
};

/// Throws InvalidSpec describing the first problem found.
void validate_domain_specs(std::span<const DomainSpec> specs, std::size_t dim);

std::vector<DomainSpec> domain_specs_from_json(const nlohmann::json& doc);
nlohmann::ordered_json domain_specs_to_json(std::span<const DomainSpec> specs);
/// Throws MissingFile or InvalidSpec.
std::vector<DomainSpec> load_domain_specs(const std::filesystem::path& path);

/// `count` single-component domains named d0, d1, ... whose means sit on
/// distinct axes so that every pair of domain means is `separation` apart
/// (unit variances). Requires dim >= count.
std::vector<DomainSpec> separated_domain_specs(std::size_t count, std::size_t dim,
                                               std::size_t utterances_per_domain,
                                               std::uint32_t min_frames, std::uint32_t max_frames,
                                               double separation);

/// Draws the frames of one utterance. The stream is fully determined by
/// (seed, domain_index, spec.seed_offset, utterance_index).
FeatureMatrix sample_utterance(const DomainSpec& spec, std::size_t dim, std::uint64_t seed,
                               std::size_t domain_index, std::size_t utterance_index);

/// Writes `<out_dir>/manifest.jsonl` and `<out_dir>/feats/<id>.lrsf` and
/// returns the manifest. Durations follow the 10 ms frame shift.
CorpusManifest generate_corpus(std::span<const DomainSpec> specs, std::size_t dim,
                               std::uint64_t seed, const std::filesystem::path& out_dir,
                               unsigned threads = 1);

struct SelectionReport {
  std::string target_domain;
  std::map<std::string, double> per_domain_hours;
  std::map<std::string, double> per_domain_fraction;
  /// Undefined (nullopt) for an empty selection.
  std::optional<double> precision;
  double recall = 0.0;
  double total_hours = 0.0;
  double target_hours_selected = 0.0;
  double target_hours_total = 0.0;
  std::size_t selected_count = 0;
};

/// Composition of a selection against the manifest's domain labels. Hours
/// come from the manifest records.
SelectionReport evaluate_selection(const SelectionResult& result, const CorpusManifest& manifest,
                                   const std::string& target_domain);

nlohmann::ordered_json report_to_json(const SelectionReport& report);
std::string report_table(const SelectionReport& report);

/// Exact max of f_lr over subsets of size <= cardinality, by enumeration.
/// Throws TooLarge for more than 20 scores.
double brute_force_optimum(std::span<const LrScore> scores, std::size_t cardinality);

}  // namespace lrselect
