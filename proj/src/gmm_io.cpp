#include "lrselect/gmm_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include "lrselect/error.hpp"

namespace lrselect {

using nlohmann::ordered_json;

std::string_view to_string(InitMethod method) {
  return method == InitMethod::KMeansPlusPlus ? "kmeans_plus_plus" : "random_frames";
}

InitMethod parse_init_method(std::string_view name) {
  if (name == "kmeans_plus_plus") return InitMethod::KMeansPlusPlus;
  if (name == "random_frames") return InitMethod::RandomFrames;
  throw Error(ErrorCode::InvalidSpec, "unknown init method '" + std::string(name) + "'");
}

ordered_json model_to_json(const DiagonalGmm& model, const ModelMetadata& meta) {
  ordered_json doc;
  doc["k"] = model.num_components();
  doc["d"] = model.dim();
  doc["weights"] = model.weights();
  auto rows = [&](const BasicMatrix<double>& m) {
    ordered_json out = ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      out.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return out;
  };
  doc["means"] = rows(model.means());
  doc["variances"] = rows(model.variances());

  ordered_json config;
  config["num_components"] = meta.config.num_components;
  config["max_iterations"] = meta.config.max_iterations;
  config["rel_tol"] = meta.config.rel_tol;
  config["variance_floor_factor"] = meta.config.variance_floor_factor;
  config["init"] = std::string(to_string(meta.config.init));
  ordered_json metadata;
  metadata["seed"] = meta.config.seed;
  metadata["config"] = config;
  metadata["corpus_fingerprint"] = meta.corpus_fingerprint;
  metadata["iterations"] = meta.iterations;
  metadata["final_log_likelihood"] = meta.final_log_likelihood;
  doc["metadata"] = metadata;
  return doc;
}

StoredModel model_from_json(const nlohmann::json& doc) {
  try {
    const auto k = doc.at("k").get<std::size_t>();
    const auto d = doc.at("d").get<std::size_t>();
    auto weights = doc.at("weights").get<std::vector<double>>();
    auto matrix = [&](const char* key) {
      const auto& rows = doc.at(key);
      if (!rows.is_array() || rows.size() != k)
        throw Error(ErrorCode::ParseError, std::string("model field '") + key + "' must hold k rows");
      BasicMatrix<double> m(k, d);
      for (std::size_t r = 0; r < k; ++r) {
        auto row = rows[r].get<std::vector<double>>();
        if (row.size() != d)
          throw Error(ErrorCode::ParseError, std::string("model field '") + key + "' row has wrong length");
        std::copy(row.begin(), row.end(), m.row(r).begin());
      }
      return m;
    };
    if (weights.size() != k) throw Error(ErrorCode::ParseError, "model weights must hold k values");
    StoredModel stored{DiagonalGmm(std::move(weights), matrix("means"), matrix("variances")),
                       doc.contains("metadata") ? ordered_json::parse(doc["metadata"].dump()) : ordered_json()};
    return stored;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const DiagonalGmm& model,
                const ModelMetadata& meta) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << model_to_json(model, meta).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

StoredModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "model not found: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return model_from_json(doc);
}

std::string fingerprint(const FeatureMatrix& frames) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::uint32_t word) {
    for (int i = 0; i < 4; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<std::uint32_t>(frames.rows()));
  feed(static_cast<std::uint32_t>(frames.cols()));
  for (float v : frames.values()) feed(std::bit_cast<std::uint32_t>(v));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lrselect
