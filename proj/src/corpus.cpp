#include "lrselect/corpus.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lrselect/error.hpp"

namespace lrselect {
namespace {

namespace fs = std::filesystem;

constexpr std::array<char, 4> kMagic = {'L', 'R', 'S', 'F'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(char* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
}

std::uint32_t get_u32(const char* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

FeatureHeader parse_header(const char* bytes, const fs::path& path) {
  if (std::memcmp(bytes, kMagic.data(), kMagic.size()) != 0)
    throw Error(ErrorCode::CorruptFile, path.string() + ": bad magic");
  FeatureHeader header{get_u32(bytes + 4), get_u32(bytes + 8)};
  if (get_u32(bytes + 12) != 0)
    throw Error(ErrorCode::CorruptFile, path.string() + ": reserved field is not zero");
  if (header.frames == 0 || header.dim == 0)
    throw Error(ErrorCode::CorruptFile, path.string() + ": empty frame grid in header");
  return header;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                              std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw Error(ErrorCode::ParseError,
                "manifest line " + std::to_string(line) + ": missing key '" + key + "'");
  return *it;
}

std::uint32_t positive_u32(const nlohmann::json& value, const char* key,
                           std::size_t line) {
  if (!value.is_number_integer() || value.get<std::int64_t>() < 1 ||
      value.get<std::int64_t>() > std::int64_t{0xffffffff})
    throw Error(ErrorCode::ParseError, "manifest line " + std::to_string(line) +
                                           ": '" + key + "' must be a positive integer");
  return static_cast<std::uint32_t>(value.get<std::int64_t>());
}

UtteranceRecord parse_record(const std::string& text, std::size_t line) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError,
                "manifest line " + std::to_string(line) + ": " + e.what());
  }
  if (!obj.is_object())
    throw Error(ErrorCode::ParseError,
                "manifest line " + std::to_string(line) + ": expected a JSON object");

  UtteranceRecord rec;
  const auto& id = require(obj, "id", line);
  if (!id.is_string())
    throw Error(ErrorCode::ParseError, "manifest line " + std::to_string(line) + ": 'id' must be a string");
  rec.id = id.get<std::string>();

  if (auto it = obj.find("domain"); it != obj.end() && !it->is_null()) {
    if (!it->is_string())
      throw Error(ErrorCode::ParseError, "manifest line " + std::to_string(line) +
                                             ": 'domain' must be a string or null");
    rec.domain = it->get<std::string>();
  }

  const auto& duration = require(obj, "duration_sec", line);
  if (!duration.is_number())
    throw Error(ErrorCode::ParseError, "manifest line " + std::to_string(line) +
                                           ": 'duration_sec' must be a number");
  rec.duration_sec = duration.get<double>();

  rec.frame_count = positive_u32(require(obj, "frame_count", line), "frame_count", line);
  rec.dim = positive_u32(require(obj, "dim", line), "dim", line);

  const auto& path = require(obj, "path", line);
  if (!path.is_string() || path.get<std::string>().empty())
    throw Error(ErrorCode::ParseError, "manifest line " + std::to_string(line) +
                                           ": 'path' must be a non-empty string");
  rec.path = path.get<std::string>();
  return rec;
}

}  // namespace

CorpusManifest CorpusManifest::create(std::vector<UtteranceRecord> utterances,
                                      std::filesystem::path base_dir) {
  CorpusManifest m;
  m.base_dir_ = std::move(base_dir);
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& rec = utterances[i];
    if (rec.id.empty())
      throw Error(ErrorCode::ParseError, "record " + std::to_string(i) + " has an empty id");
    if (!(rec.duration_sec > 0.0) || !std::isfinite(rec.duration_sec))
      throw Error(ErrorCode::ParseError,
                  "record '" + rec.id + "': duration_sec must be positive and finite");
    if (rec.frame_count < 1 || rec.dim < 1)
      throw Error(ErrorCode::ParseError,
                  "record '" + rec.id + "': frame_count and dim must be >= 1");
    if (i == 0) m.feature_dim_ = rec.dim;
    if (rec.dim != m.feature_dim_)
      throw Error(ErrorCode::DimMismatch, "record '" + rec.id + "' has dim " +
                                              std::to_string(rec.dim) + ", manifest dim is " +
                                              std::to_string(m.feature_dim_));
    if (!m.index_.emplace(rec.id, i).second)
      throw Error(ErrorCode::DuplicateId, "duplicate utterance id '" + rec.id + "'");
  }
  m.utterances_ = std::move(utterances);
  return m;
}

const UtteranceRecord* CorpusManifest::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &utterances_[it->second];
}

fs::path CorpusManifest::resolve(const UtteranceRecord& record) const {
  fs::path p(record.path);
  return p.is_absolute() ? p : base_dir_ / p;
}

double CorpusManifest::total_hours() const {
  double seconds = 0.0;
  for (const auto& rec : utterances_) seconds += rec.duration_sec;
  return seconds / 3600.0;
}

CorpusManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "manifest not found: " + path.string());

  std::vector<UtteranceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    records.push_back(parse_record(line, line_no));
  }

  auto manifest = CorpusManifest::create(std::move(records), path.parent_path());
  for (const auto& rec : manifest.utterances()) {
    auto file = manifest.resolve(rec);
    if (!fs::exists(file))
      throw Error(ErrorCode::MissingFile,
                  "feature file for '" + rec.id + "' not found: " + file.string());
    auto header = read_feature_header(file);
    if (header.frames != rec.frame_count || header.dim != rec.dim)
      throw Error(ErrorCode::DimMismatch,
                  "record '" + rec.id + "' declares " + std::to_string(rec.frame_count) + "x" +
                      std::to_string(rec.dim) + " but its file holds " +
                      std::to_string(header.frames) + "x" + std::to_string(header.dim));
  }
  return manifest;
}

void write_manifest(const fs::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& rec : manifest.utterances()) {
    nlohmann::ordered_json obj;
    obj["id"] = rec.id;
    obj["domain"] = rec.domain ? nlohmann::ordered_json(*rec.domain) : nlohmann::ordered_json(nullptr);
    obj["duration_sec"] = rec.duration_sec;
    obj["frame_count"] = rec.frame_count;
    obj["dim"] = rec.dim;
    obj["path"] = rec.path;
    out << obj.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

FeatureHeader read_feature_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::array<char, kHeaderBytes> bytes{};
  in.read(bytes.data(), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw Error(ErrorCode::CorruptFile, path.string() + ": short header");
  return parse_header(bytes.data(), path);
}

FeatureMatrix read_feature_file(const fs::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < kHeaderBytes)
    throw Error(ErrorCode::CorruptFile, path.string() + ": short header");
  const auto header = parse_header(bytes.data(), path);

  const std::uint64_t count = std::uint64_t{header.frames} * header.dim;
  const std::uint64_t expected = kHeaderBytes + 4 * count;
  if (bytes.size() < expected)
    throw Error(ErrorCode::CorruptFile, path.string() + ": short read, expected " +
                                            std::to_string(expected) + " bytes, found " +
                                            std::to_string(bytes.size()));
  if (bytes.size() > expected)
    throw Error(ErrorCode::CorruptFile, path.string() + ": trailing bytes after payload");

  FeatureMatrix m(header.frames, header.dim);
  const char* p = bytes.data() + kHeaderBytes;
  for (std::uint32_t r = 0; r < header.frames; ++r) {
    for (std::uint32_t c = 0; c < header.dim; ++c, p += 4) {
      const float v = std::bit_cast<float>(get_u32(p));
      if (!std::isfinite(v))
        throw Error(ErrorCode::CorruptFile, path.string() + ": non-finite value at row " +
                                                std::to_string(r) + ", column " +
                                                std::to_string(c));
      m(r, c) = v;
    }
  }
  return m;
}

void write_features(const fs::path& path, const FeatureMatrix& matrix) {
  if (matrix.rows() == 0 || matrix.cols() == 0)
    throw Error(ErrorCode::InvalidSpec, "feature matrix must be at least 1x1");
  if (matrix.rows() > 0xffffffffu || matrix.cols() > 0xffffffffu)
    throw Error(ErrorCode::InvalidSpec, "feature matrix too large for the file format");
  for (float v : matrix.values())
    if (!std::isfinite(v))
      throw Error(ErrorCode::InvalidSpec, "feature matrix holds a non-finite value");

  std::string bytes(kHeaderBytes + 4 * matrix.values().size(), '\0');
  std::memcpy(bytes.data(), kMagic.data(), kMagic.size());
  put_u32(bytes.data() + 4, static_cast<std::uint32_t>(matrix.rows()));
  put_u32(bytes.data() + 8, static_cast<std::uint32_t>(matrix.cols()));
  char* p = bytes.data() + kHeaderBytes;
  for (float v : matrix.values()) {
    put_u32(p, std::bit_cast<std::uint32_t>(v));
    p += 4;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

FeatureMatrix read_features(const CorpusManifest& manifest, const std::string& id) {
  const auto* rec = manifest.find(id);
  if (rec == nullptr) throw Error(ErrorCode::UnknownId, "unknown utterance id '" + id + "'");
  auto matrix = read_feature_file(manifest.resolve(*rec));
  if (matrix.rows() != rec->frame_count || matrix.cols() != rec->dim)
    throw Error(ErrorCode::DimMismatch,
                "record '" + id + "' does not match the shape of its feature file");
  return matrix;
}

FeatureMatrix pool_frames(const CorpusManifest& manifest,
                          const std::vector<std::string>& ids) {
  std::vector<const UtteranceRecord*> records;
  if (ids.empty()) {
    for (const auto& rec : manifest.utterances()) records.push_back(&rec);
  } else {
    for (const auto& id : ids) {
      const auto* rec = manifest.find(id);
      if (rec == nullptr) throw Error(ErrorCode::UnknownId, "unknown utterance id '" + id + "'");
      records.push_back(rec);
    }
  }

  std::size_t total = 0;
  for (const auto* rec : records) total += rec->frame_count;
  const std::size_t dim = manifest.feature_dim();
  std::vector<float> data;
  data.reserve(total * dim);
  for (const auto* rec : records) {
    auto m = read_features(manifest, rec->id);
    data.insert(data.end(), m.values().begin(), m.values().end());
  }
  return FeatureMatrix(total, dim, std::move(data));
}

std::vector<std::string> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "id list not found: " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto last = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(first, last - first + 1));
  }
  return ids;
}

}  // namespace lrselect
