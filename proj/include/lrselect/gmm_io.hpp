#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "lrselect/gmm.hpp"

namespace lrselect {

/// Provenance stored alongside a serialized model.
struct ModelMetadata {
  EmConfig config;
  std::string corpus_fingerprint;
  std::size_t iterations = 0;
  double final_log_likelihood = 0.0;
};

struct StoredModel {
  DiagonalGmm model;
  nlohmann::ordered_json metadata;
};

nlohmann::ordered_json model_to_json(const DiagonalGmm& model, const ModelMetadata& meta);
StoredModel model_from_json(const nlohmann::json& doc);

void save_model(const std::filesystem::path& path, const DiagonalGmm& model,
                const ModelMetadata& meta);
/// Throws MissingFile, ParseError or InvalidSpec.
StoredModel load_model(const std::filesystem::path& path);

/// FNV-1a over the raw bytes of the frames, as 16 hex digits.
std::string fingerprint(const FeatureMatrix& frames);

std::string_view to_string(InitMethod method);
InitMethod parse_init_method(std::string_view name);

}  // namespace lrselect
