#include "lrselect/scoring.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lrselect/error.hpp"
#include "lrselect/numeric.hpp"
#include "lrselect/parallel.hpp"

namespace lrselect {
namespace {

constexpr const char* kCsvHeader = "id,domain,duration_sec,frame_count,mean_log_lr,mode";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Splits one CSV record. Quoted fields may contain commas and doubled quotes
// but not line breaks.
std::vector<std::string> split_csv(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted)
    throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s, const char* what, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) + ": bad " + what +
                                           " '" + s + "'");
  return v;
}

}  // namespace

std::string_view to_string(ScoreMode mode) {
  return mode == ScoreMode::Geometric ? "geometric" : "arithmetic";
}

ScoreMode parse_score_mode(std::string_view name) {
  if (name == "geometric") return ScoreMode::Geometric;
  if (name == "arithmetic") return ScoreMode::Arithmetic;
  throw Error(ErrorCode::InvalidSpec, "unknown score mode '" + std::string(name) + "'");
}

double score_from_log_ratios(std::span<const double> log_ratios, ScoreMode mode) {
  if (log_ratios.empty()) throw Error(ErrorCode::EmptyInput, "cannot score an utterance with no frames");
  const double t = static_cast<double>(log_ratios.size());
  if (mode == ScoreMode::Geometric) return pairwise_sum(log_ratios) / t;
  return log_sum_exp(log_ratios) - std::log(t);
}

double score_utterance(const DiagonalGmm& target, const DiagonalGmm& background,
                       const FeatureMatrix& matrix, ScoreMode mode) {
  auto ratios = frame_log_densities(target, matrix);
  const auto bg = frame_log_densities(background, matrix);
  for (std::size_t t = 0; t < ratios.size(); ++t) ratios[t] -= bg[t];
  return score_from_log_ratios(ratios, mode);
}

std::vector<LrScore> score_corpus(const DiagonalGmm& target, const DiagonalGmm& background,
                                  const CorpusManifest& manifest, ScoreMode mode,
                                  unsigned threads) {
  if (manifest.empty()) return {};
  if (target.dim() != manifest.feature_dim() || background.dim() != manifest.feature_dim())
    throw Error(ErrorCode::DimMismatch,
                "model dimensions (" + std::to_string(target.dim()) + ", " +
                    std::to_string(background.dim()) + ") do not match feature dimension " +
                    std::to_string(manifest.feature_dim()));

  const auto& records = manifest.utterances();
  std::vector<LrScore> scores(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& rec = records[i];
    try {
      const auto matrix = read_features(manifest, rec.id);
      scores[i] = LrScore{rec.id, rec.domain, rec.duration_sec, rec.frame_count,
                          score_utterance(target, background, matrix, mode)};
    } catch (const Error& e) {
      throw Error(e.code(), "utterance '" + rec.id + "': " + e.what());
    }
  });
  return scores;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << kCsvHeader << '\n';
  const std::string mode(to_string(table.mode));
  for (const auto& s : table.scores) {
    out << csv_field(s.id) << ',' << csv_field(s.domain.value_or("")) << ','
        << format_double(s.duration_sec) << ',' << s.frame_count << ','
        << format_double(s.mean_log_lr) << ',' << mode << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

ScoreTable read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "scores file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::ParseError, path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw Error(ErrorCode::ParseError, path.string() + ": unexpected header '" + line + "'");

  ScoreTable table;
  std::optional<ScoreMode> mode;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line, line_no);
    if (f.size() != 6)
      throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) +
                                             ": expected 6 fields, found " + std::to_string(f.size()));
    LrScore s;
    s.id = f[0];
    if (s.id.empty())
      throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) + ": empty id");
    if (!f[1].empty()) s.domain = f[1];
    s.duration_sec = parse_double(f[2], "duration_sec", line_no);
    if (!(s.duration_sec > 0.0))
      throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) +
                                             ": duration_sec must be positive");
    const double frames = parse_double(f[3], "frame_count", line_no);
    if (frames < 1.0 || frames != std::floor(frames) || frames > 4294967295.0)
      throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) +
                                             ": frame_count must be a positive integer");
    s.frame_count = static_cast<std::uint32_t>(frames);
    s.mean_log_lr = parse_double(f[4], "mean_log_lr", line_no);
    ScoreMode row_mode;
    try {
      row_mode = parse_score_mode(f[5]);
    } catch (const Error&) {
      throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) +
                                             ": unknown mode '" + f[5] + "'");
    }
    if (mode && *mode != row_mode)
      throw Error(ErrorCode::ParseError, "scores line " + std::to_string(line_no) + ": mixed score modes");
    mode = row_mode;
    table.scores.push_back(std::move(s));
  }
  if (mode) table.mode = *mode;
  return table;
}

}  // namespace lrselect
