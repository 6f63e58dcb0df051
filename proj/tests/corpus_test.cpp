#include <doctest.h>

#include <bit>
#include <cstring>
#include <random>

#include "lrselect/corpus.hpp"
#include "lrselect/error.hpp"
#include "test_support.hpp"

using namespace lrselect;
using lrselect::testing::slurp;
using lrselect::testing::spit;
using lrselect::testing::TempDir;

namespace {

FeatureMatrix ramp(std::size_t rows, std::size_t cols) {
  FeatureMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = static_cast<float>(r * cols + c) * 0.25f;
  return m;
}

std::string record_line(const std::string& id, std::uint32_t frames, std::uint32_t dim,
                        const std::string& path, const char* domain = "\"A\"") {
  return "{\"id\":\"" + id + "\",\"domain\":" + domain + ",\"duration_sec\":" +
         std::to_string(frames * 0.01) + ",\"frame_count\":" + std::to_string(frames) +
         ",\"dim\":" + std::to_string(dim) + ",\"path\":\"" + path + "\"}\n";
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an lrselect::Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("feature file length follows 16 + 4*T*D") {
  TempDir dir;
  FeatureMatrix one(1, 1);
  one(0, 0) = 0.5f;
  write_features(dir / "one.lrsf", one);
  CHECK(slurp(dir / "one.lrsf").size() == 20);

  write_features(dir / "two.lrsf", ramp(2, 3));
  const auto bytes = slurp(dir / "two.lrsf");
  CHECK(bytes.size() == 40);
  CHECK(bytes.substr(0, 4) == "LRSF");
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(static_cast<unsigned char>(bytes[8]) == 3);
  CHECK(bytes.substr(12, 4) == std::string(4, '\0'));
}

TEST_CASE("write then read returns the same matrix") {
  TempDir dir;
  FeatureMatrix m(2, 3, {1, 2, 3, 4, 5, 6});
  write_features(dir / "m.lrsf", m);
  CHECK(read_feature_file(dir / "m.lrsf") == m);
}

TEST_CASE("round trip is bit exact for random finite floats") {
  TempDir dir;
  std::mt19937 gen(1234);
  std::uniform_int_distribution<std::uint32_t> bits;
  FeatureMatrix m(100, 10);
  for (auto& v : m.values()) {
    float f;
    do {
      f = std::bit_cast<float>(bits(gen));
    } while (!std::isfinite(f));
    v = f;
  }
  write_features(dir / "r.lrsf", m);
  const auto back = read_feature_file(dir / "r.lrsf");
  REQUIRE(back.rows() == 100);
  for (std::size_t i = 0; i < m.values().size(); ++i)
    REQUIRE(std::bit_cast<std::uint32_t>(back.values()[i]) ==
            std::bit_cast<std::uint32_t>(m.values()[i]));
}

TEST_CASE("NaN in a feature file is reported with its position") {
  TempDir dir;
  write_features(dir / "n.lrsf", ramp(2, 3));
  auto bytes = slurp(dir / "n.lrsf");
  const auto nan = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  // row 0, column 1 -> payload offset 4
  for (int i = 0; i < 4; ++i) bytes[16 + 4 + i] = static_cast<char>((nan >> (8 * i)) & 0xff);
  spit(dir / "n.lrsf", bytes);
  try {
    read_feature_file(dir / "n.lrsf");
    FAIL("expected CorruptFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptFile);
    CHECK(std::string(e.what()).find("row 0, column 1") != std::string::npos);
  }
}

TEST_CASE("corrupt feature files raise typed errors") {
  TempDir dir;
  write_features(dir / "ok.lrsf", ramp(3, 2));
  const auto good = slurp(dir / "ok.lrsf");

  auto bad_magic = good;
  bad_magic[0] = 'X';
  spit(dir / "magic.lrsf", bad_magic);
  CHECK(code_of([&] { read_feature_file(dir / "magic.lrsf"); }) == ErrorCode::CorruptFile);

  spit(dir / "short.lrsf", good.substr(0, good.size() - 1));
  CHECK(code_of([&] { read_feature_file(dir / "short.lrsf"); }) == ErrorCode::CorruptFile);

  spit(dir / "long.lrsf", good + "x");
  CHECK(code_of([&] { read_feature_file(dir / "long.lrsf"); }) == ErrorCode::CorruptFile);

  spit(dir / "tiny.lrsf", "LRS");
  CHECK(code_of([&] { read_feature_file(dir / "tiny.lrsf"); }) == ErrorCode::CorruptFile);

  CHECK(code_of([&] { read_feature_file(dir / "absent.lrsf"); }) == ErrorCode::MissingFile);
}

TEST_CASE("fuzzed feature files never escape as anything but typed errors") {
  TempDir dir;
  write_features(dir / "seed.lrsf", ramp(4, 3));
  const auto good = slurp(dir / "seed.lrsf");
  std::mt19937 gen(99);
  for (int trial = 0; trial < 300; ++trial) {
    auto bytes = good;
    const int kind = trial % 3;
    if (kind == 0) {
      bytes.resize(gen() % bytes.size());
    } else {
      const int flips = 1 + static_cast<int>(gen() % 4);
      for (int f = 0; f < flips; ++f) bytes[gen() % bytes.size()] = static_cast<char>(gen());
    }
    spit(dir / "fuzz.lrsf", bytes);
    try {
      read_feature_file(dir / "fuzz.lrsf");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CorruptFile);
    }
  }
}

TEST_CASE("load_manifest accepts a well-formed manifest") {
  TempDir dir;
  std::string text = "# three utterances\n";
  for (int i = 0; i < 3; ++i) {
    const std::string id = "utt" + std::to_string(i);
    write_features(dir / (id + ".lrsf"), ramp(5 + i, 39));
    text += record_line(id, 5 + i, 39, id + ".lrsf");
  }
  spit(dir / "m.jsonl", text);
  const auto m = load_manifest(dir / "m.jsonl");
  CHECK(m.size() == 3);
  CHECK(m.feature_dim() == 39);
  CHECK(m.utterances()[1].id == "utt1");
  CHECK(m.utterances()[1].domain == std::optional<std::string>("A"));
  CHECK(read_features(m, "utt2") == ramp(7, 39));
  CHECK(code_of([&] { read_features(m, "nope"); }) == ErrorCode::UnknownId);
}

TEST_CASE("load_manifest validation errors") {
  TempDir dir;
  write_features(dir / "a.lrsf", ramp(4, 2));
  write_features(dir / "b.lrsf", ramp(4, 3));

  SUBCASE("duplicate id") {
    spit(dir / "m.jsonl", record_line("utt1", 4, 2, "a.lrsf") + record_line("utt1", 4, 2, "a.lrsf"));
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::DuplicateId);
  }
  SUBCASE("dimension differs between records") {
    spit(dir / "m.jsonl", record_line("x", 4, 2, "a.lrsf") + record_line("y", 4, 3, "b.lrsf"));
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::DimMismatch);
  }
  SUBCASE("frame count disagrees with the file header") {
    write_features(dir / "t90.lrsf", ramp(90, 2));
    spit(dir / "m.jsonl", record_line("short-one", 100, 2, "t90.lrsf"));
    try {
      load_manifest(dir / "m.jsonl");
      FAIL("expected DimMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DimMismatch);
      CHECK(std::string(e.what()).find("short-one") != std::string::npos);
    }
  }
  SUBCASE("malformed line reports its line number") {
    spit(dir / "m.jsonl", record_line("x", 4, 2, "a.lrsf") + "{not json\n");
    try {
      load_manifest(dir / "m.jsonl");
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("missing and invalid fields") {
    spit(dir / "m.jsonl", "{\"id\":\"x\",\"duration_sec\":1,\"frame_count\":4,\"dim\":2}\n");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::ParseError);
    spit(dir / "m.jsonl", "{\"id\":\"x\",\"domain\":null,\"duration_sec\":0,\"frame_count\":4,\"dim\":2,\"path\":\"a.lrsf\"}\n");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::ParseError);
    spit(dir / "m.jsonl", "{\"id\":\"\",\"domain\":null,\"duration_sec\":1,\"frame_count\":4,\"dim\":2,\"path\":\"a.lrsf\"}\n");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::ParseError);
    spit(dir / "m.jsonl", "{\"id\":\"x\",\"domain\":null,\"duration_sec\":1,\"frame_count\":-4,\"dim\":2,\"path\":\"a.lrsf\"}\n");
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::ParseError);
  }
  SUBCASE("missing files") {
    CHECK(code_of([&] { load_manifest(dir / "absent.jsonl"); }) == ErrorCode::MissingFile);
    spit(dir / "m.jsonl", record_line("x", 4, 2, "gone.lrsf"));
    CHECK(code_of([&] { load_manifest(dir / "m.jsonl"); }) == ErrorCode::MissingFile);
  }
}

TEST_CASE("manifest write/load round trip and null domains") {
  TempDir dir;
  write_features(dir / "a.lrsf", ramp(4, 2));
  std::vector<UtteranceRecord> recs = {{"u1", std::nullopt, 0.04, 4, 2, "a.lrsf"},
                                       {"u2", "B", 0.04, 4, 2, "a.lrsf"}};
  const auto m = CorpusManifest::create(recs, dir.path());
  write_manifest(dir / "m.jsonl", m);
  const auto back = load_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK_FALSE(back.utterances()[0].domain.has_value());
  CHECK(back.utterances()[1].domain == std::optional<std::string>("B"));
  CHECK(back.utterances()[0].duration_sec == 0.04);
}

TEST_CASE("total_hours is additive over disjoint manifests") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> dur(0.1, 30.0);
  std::vector<UtteranceRecord> a, b, ab;
  for (int i = 0; i < 50; ++i) {
    UtteranceRecord r{"u" + std::to_string(i), std::nullopt, dur(gen), 10, 3, "x"};
    (i % 3 == 0 ? a : b).push_back(r);
    ab.push_back(r);
  }
  const auto ma = CorpusManifest::create(a, "."), mb = CorpusManifest::create(b, ".");
  const auto mab = CorpusManifest::create(ab, ".");
  CHECK(mab.total_hours() == doctest::Approx(ma.total_hours() + mb.total_hours()).epsilon(1e-12));
  CHECK(CorpusManifest().total_hours() == 0.0);
}

TEST_CASE("pool_frames stacks utterances in the requested order") {
  TempDir dir;
  write_features(dir / "a.lrsf", FeatureMatrix(1, 2, {1, 2}));
  write_features(dir / "b.lrsf", FeatureMatrix(2, 2, {3, 4, 5, 6}));
  const auto m = CorpusManifest::create({{"a", std::nullopt, 0.01, 1, 2, "a.lrsf"},
                                         {"b", std::nullopt, 0.02, 2, 2, "b.lrsf"}},
                                        dir.path());
  CHECK(pool_frames(m) == FeatureMatrix(3, 2, {1, 2, 3, 4, 5, 6}));
  CHECK(pool_frames(m, {"b", "a"}) == FeatureMatrix(3, 2, {3, 4, 5, 6, 1, 2}));
  CHECK(code_of([&] { pool_frames(m, {"zzz"}); }) == ErrorCode::UnknownId);
}
