#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lrselect/corpus.hpp"
#include "lrselect/gmm.hpp"

namespace lrselect {

/// How frame likelihood ratios are averaged over an utterance.
///  - Geometric: (1/T) sum_t log r_t, the log of the geometric mean.
///  - Arithmetic: log((1/T) sum_t r_t), the log of the arithmetic mean.
enum class ScoreMode { Geometric, Arithmetic };

std::string_view to_string(ScoreMode mode);
ScoreMode parse_score_mode(std::string_view name);

/// Per-utterance likelihood-ratio statistic, kept in the log domain.
struct LrScore {
  std::string id;
  /// Carried through for reporting only.
  std::optional<std::string> domain;
  double duration_sec = 0.0;
  std::uint32_t frame_count = 0;
  double mean_log_lr = 0.0;
};

/// Reduces per-frame log ratios log p_tgt(O_t) - log p_bg(O_t).
double score_from_log_ratios(std::span<const double> log_ratios, ScoreMode mode);

double score_utterance(const DiagonalGmm& target, const DiagonalGmm& background,
                       const FeatureMatrix& matrix, ScoreMode mode);

/// One score per manifest record, in manifest order. Read failures are
/// rethrown with the utterance id prepended.
std::vector<LrScore> score_corpus(const DiagonalGmm& target, const DiagonalGmm& background,
                                  const CorpusManifest& manifest, ScoreMode mode,
                                  unsigned threads = 1);

struct ScoreTable {
  ScoreMode mode = ScoreMode::Geometric;
  std::vector<LrScore> scores;
};

/// CSV with header id,domain,duration_sec,frame_count,mean_log_lr,mode.
void write_scores_csv(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_scores_csv(const std::filesystem::path& path);

}  // namespace lrselect
