#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lrselect/matrix.hpp"

namespace lrselect {

/// Frame shift used to map frame counts to durations in generated corpora.
inline constexpr double kFrameShiftSec = 0.01;

struct UtteranceRecord {
  std::string id;
  /// Evaluation-only label. Selection never reads it.
  std::optional<std::string> domain;
  double duration_sec = 0.0;
  std::uint32_t frame_count = 0;
  std::uint32_t dim = 0;
  /// Relative to the manifest's directory.
  std::string path;
};

/// Validated index of a corpus. Construct through load_manifest or
/// CorpusManifest::create so the invariants always hold.
class CorpusManifest {
 public:
  CorpusManifest() = default;

  /// Validates ids, dimensions and durations. Does not touch the filesystem.
  static CorpusManifest create(std::vector<UtteranceRecord> utterances,
                               std::filesystem::path base_dir);

  const std::vector<UtteranceRecord>& utterances() const { return utterances_; }
  std::size_t size() const { return utterances_.size(); }
  bool empty() const { return utterances_.empty(); }

  /// 0 for an empty manifest.
  std::uint32_t feature_dim() const { return feature_dim_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  const UtteranceRecord* find(const std::string& id) const;
  std::filesystem::path resolve(const UtteranceRecord& record) const;

  double total_hours() const;

 private:
  std::vector<UtteranceRecord> utterances_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint32_t feature_dim_ = 0;
  std::filesystem::path base_dir_;
};

/// Header of a feature file, read without loading the payload.
struct FeatureHeader {
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
};

/// Reads and validates a manifest, including the existence and header of
/// every referenced feature file.
CorpusManifest load_manifest(const std::filesystem::path& path);

/// Writes the manifest as JSON lines. Record paths are written verbatim.
void write_manifest(const std::filesystem::path& path,
                    const CorpusManifest& manifest);

FeatureHeader read_feature_header(const std::filesystem::path& path);
FeatureMatrix read_feature_file(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path,
                    const FeatureMatrix& matrix);

/// Loads one utterance and checks it against its manifest record.
FeatureMatrix read_features(const CorpusManifest& manifest,
                            const std::string& id);

/// Stacks the frames of the given utterances (manifest order when ids is
/// empty) into a single N x D matrix.
FeatureMatrix pool_frames(const CorpusManifest& manifest,
                          const std::vector<std::string>& ids = {});

/// Reads one id per line, skipping blank lines and '#' comments.
std::vector<std::string> read_id_list(const std::filesystem::path& path);

}  // namespace lrselect
