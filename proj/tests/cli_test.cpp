#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "lrselect/corpus.hpp"
#include "lrselect/gmm_io.hpp"
#include "lrselect/random.hpp"
#include "lrselect/scoring.hpp"
#include "lrselect/synthbench.hpp"
#include "test_support.hpp"

using namespace lrselect;
using lrselect::testing::run_cli;
using lrselect::testing::slurp;
using lrselect::testing::spit;
using lrselect::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Six separated domains, written as a spec file under `dir`.
fs::path write_spec(const TempDir& dir, std::size_t per_domain = 30) {
  const auto specs = separated_domain_specs(6, 10, per_domain, 20, 60, 8.0);
  spit(dir / "spec.json", domain_specs_to_json(specs).dump());
  return dir / "spec.json";
}

std::vector<std::string> ids_in_domain(const CorpusManifest& m, const std::string& domain) {
  std::vector<std::string> ids;
  for (const auto& r : m.utterances())
    if (r.domain == domain) ids.push_back(r.id);
  return ids;
}

void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  spit(path, text);
}

std::string dir_digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.string() + "\n" + slurp(root / f);
  return all;
}

}  // namespace

TEST_CASE("cli: help, version and usage errors") {
  TempDir dir;
  std::string out;
  CHECK(run_cli("--help", dir.path(), &out) == 0);
  CHECK(out.find("train-gmm") != std::string::npos);
  CHECK(run_cli("--version", dir.path(), &out) == 0);
  CHECK(out.find("lrselect") != std::string::npos);
  CHECK(run_cli("", dir.path()) == 2);
  CHECK(run_cli("bogus", dir.path()) == 2);
  CHECK(run_cli("gen --spec x", dir.path()) == 2);
  CHECK(run_cli("--log-level loud gen --spec x --out y", dir.path()) == 2);
}

TEST_CASE("cli gen") {
  TempDir dir;
  const auto spec = write_spec(dir);
  CHECK(run_cli("gen --spec " + q(spec) + " --out " + q(dir / "c1") + " --seed 3", dir.path()) == 0);
  CHECK(fs::exists(dir / "c1" / "manifest.jsonl"));
  CHECK(load_manifest(dir / "c1" / "manifest.jsonl").size() == 180);

  CHECK(run_cli("gen --spec " + q(spec) + " --out " + q(dir / "c2") + " --seed 3", dir.path()) == 0);
  CHECK(dir_digest(dir / "c1") == dir_digest(dir / "c2"));

  CHECK(run_cli("gen --spec " + q(dir / "missing.json") + " --out " + q(dir / "c3"), dir.path()) == 2);
  spit(dir / "bad.json", "[{\"name\":\"a\"}]");
  CHECK(run_cli("gen --spec " + q(dir / "bad.json") + " --out " + q(dir / "c3"), dir.path()) == 2);

  spit(dir / "blocker", "file");
  CHECK(run_cli("gen --spec " + q(spec) + " --out " + q(dir / "blocker" / "sub"), dir.path()) == 3);
}

TEST_CASE("cli train-gmm, score, select, report") {
  TempDir dir;
  const auto spec = write_spec(dir);
  REQUIRE(run_cli("gen --spec " + q(spec) + " --out " + q(dir / "corpus") + " --seed 5", dir.path()) == 0);
  const auto manifest_path = dir / "corpus" / "manifest.jsonl";
  const auto manifest = load_manifest(manifest_path);
  const auto a_ids = ids_in_domain(manifest, "d0");
  write_ids(dir / "a.ids", a_ids);

  std::string out;
  REQUIRE(run_cli("train-gmm --manifest " + q(manifest_path) + " --ids-file " + q(dir / "a.ids") +
                      " --k 8 --out " + q(dir / "tgt.json"),
                  dir.path(), &out) == 0);
  const auto stats = nlohmann::json::parse(out);
  CHECK(stats["k"] == 8);
  CHECK(stats["iterations"].get<int>() >= 1);
  CHECK(stats.contains("final_log_likelihood"));

  REQUIRE(run_cli("train-gmm --manifest " + q(manifest_path) + " --k 8 --out " + q(dir / "bg.json"),
                  dir.path()) == 0);

  SUBCASE("target model prefers held-out target frames") {
    REQUIRE(run_cli("gen --spec " + q(spec) + " --out " + q(dir / "heldout") + " --seed 6", dir.path()) == 0);
    const auto held = load_manifest(dir / "heldout" / "manifest.jsonl");
    const auto tgt = load_model(dir / "tgt.json").model;
    const double on_a = mean_log_likelihood(tgt, pool_frames(held, ids_in_domain(held, "d0")));
    const double on_b = mean_log_likelihood(tgt, pool_frames(held, ids_in_domain(held, "d1")));
    CHECK(on_a > on_b);
  }

  SUBCASE("too many components is a numerical failure") {
    write_ids(dir / "one.ids", {a_ids.front()});
    std::string err;
    CHECK(run_cli("train-gmm --manifest " + q(manifest_path) + " --ids-file " + q(dir / "one.ids") +
                      " --k 5000 --out " + q(dir / "x.json"),
                  dir.path(), nullptr, &err) == 4);
    CHECK(err.find("TooFewFrames") != std::string::npos);
  }

  SUBCASE("score with identical models is zero everywhere") {
    REQUIRE(run_cli("score --manifest " + q(manifest_path) + " --target " + q(dir / "bg.json") +
                        " --background " + q(dir / "bg.json") + " --out " + q(dir / "zero.csv"),
                    dir.path()) == 0);
    const auto table = read_scores_csv(dir / "zero.csv");
    CHECK(table.scores.size() == manifest.size());
    for (const auto& s : table.scores) CHECK(s.mean_log_lr == 0.0);
  }

  SUBCASE("score failures") {
    CHECK(run_cli("score --manifest " + q(manifest_path) + " --target " + q(dir / "none.json") +
                      " --background " + q(dir / "bg.json") + " --out " + q(dir / "s.csv"),
                  dir.path()) == 2);
    save_model(dir / "d2.json",
               DiagonalGmm({1.0}, BasicMatrix<double>(1, 2, {0, 0}), BasicMatrix<double>(1, 2, {1, 1})),
               {});
    CHECK(run_cli("score --manifest " + q(manifest_path) + " --target " + q(dir / "d2.json") +
                      " --background " + q(dir / "d2.json") + " --out " + q(dir / "s.csv"),
                  dir.path()) == 2);
    CHECK(run_cli("score --manifest " + q(manifest_path) + " --target " + q(dir / "tgt.json") +
                      " --background " + q(dir / "bg.json") + " --mode median --out " + q(dir / "s.csv"),
                  dir.path()) == 2);
  }

  SUBCASE("target utterances rank first, budget selection and report") {
    REQUIRE(run_cli("score --manifest " + q(manifest_path) + " --target " + q(dir / "tgt.json") +
                        " --background " + q(dir / "bg.json") + " --out " + q(dir / "s.csv"),
                    dir.path()) == 0);
    const auto ranked = rank_scores(read_scores_csv(dir / "s.csv").scores);
    for (std::size_t i = 0; i < a_ids.size(); ++i) CHECK(ranked[i].domain == std::optional<std::string>("d0"));

    REQUIRE(run_cli("select --scores " + q(dir / "s.csv") + " --budget-n 30 --out " + q(dir / "sel.json") +
                        " --ids-out " + q(dir / "sel.ids"),
                    dir.path()) == 0);
    auto chosen = read_id_list(dir / "sel.ids");
    auto expected = a_ids;
    std::sort(chosen.begin(), chosen.end());
    std::sort(expected.begin(), expected.end());
    CHECK(chosen == expected);

    REQUIRE(run_cli("report --selection " + q(dir / "sel.json") + " --manifest " + q(manifest_path) +
                        " --target-domain d0",
                    dir.path(), &out) == 0);
    const auto rep = nlohmann::json::parse(out);
    CHECK(rep["precision"] == 1.0);
    CHECK(rep["recall"] == 1.0);
    double frac = 0;
    for (const auto& d : rep["per_domain"]) frac += d["fraction"].get<double>();
    CHECK(std::abs(frac - 1.0) <= 1e-9);

    CHECK(run_cli("report --selection " + q(dir / "sel.json") + " --manifest " + q(manifest_path) +
                      " --target-domain d0 --pretty",
                  dir.path(), &out) == 0);
    CHECK(out.find("precision 1.0000") != std::string::npos);
  }

  SUBCASE("empty selection report") {
    spit(dir / "empty.json",
         R"({"mode":"auto","budget":null,"threshold":99.0,"objective_value":0,"total_hours":0,"selected":[]})");
    REQUIRE(run_cli("report --selection " + q(dir / "empty.json") + " --manifest " + q(manifest_path) +
                        " --target-domain d0",
                    dir.path(), &out) == 0);
    const auto rep = nlohmann::json::parse(out);
    CHECK(rep["precision"].is_null());
    CHECK(rep["recall"] == 0.0);
  }

  SUBCASE("report needs domain labels") {
    std::string text = slurp(manifest_path);
    for (std::size_t p; (p = text.find("\"domain\":\"")) != std::string::npos;) {
      const auto end = text.find('"', p + 10);
      text.replace(p, end - p + 1, "\"domain\":null");
    }
    spit(dir / "corpus" / "unlabelled.jsonl", text);
    spit(dir / "empty.json",
         R"({"mode":"auto","budget":null,"threshold":99.0,"objective_value":0,"total_hours":0,"selected":[]})");
    CHECK(run_cli("report --selection " + q(dir / "empty.json") + " --manifest " +
                      q(dir / "corpus" / "unlabelled.jsonl") + " --target-domain d0",
                  dir.path()) == 2);
  }
}

TEST_CASE("cli select fixtures") {
  TempDir dir;
  spit(dir / "abc.csv",
       "id,domain,duration_sec,frame_count,mean_log_lr,mode\n"
       "a,,3600,360000,2.0,geometric\n"
       "b,,10800,1080000,1.5,geometric\n"
       "c,,3600,360000,1.0,geometric\n");
  REQUIRE(run_cli("select --scores " + q(dir / "abc.csv") + " --budget-hours 2 --out " + q(dir / "s.json") +
                      " --ids-out " + q(dir / "s.ids"),
                  dir.path()) == 0);
  CHECK(slurp(dir / "s.ids") == "a\nc\n");
  const auto doc = nlohmann::json::parse(slurp(dir / "s.json"));
  CHECK(doc["mode"] == "budget");
  CHECK(doc["budget"]["hours"] == 2.0);
  CHECK(doc["threshold"].is_null());
  CHECK(doc["selected"].size() == 2);
  CHECK(doc["selected"][0]["domain"].is_null());

  CHECK(run_cli("select --scores " + q(dir / "abc.csv") + " --budget-hours 2 --auto --out " + q(dir / "x.json"),
                dir.path()) == 2);
  CHECK(run_cli("select --scores " + q(dir / "abc.csv") + " --budget-hours 2 --budget-n 1 --out " +
                    q(dir / "x.json"),
                dir.path()) == 2);
  CHECK(run_cli("select --scores " + q(dir / "abc.csv") + " --out " + q(dir / "x.json"), dir.path()) == 2);
  CHECK(run_cli("select --scores " + q(dir / "abc.csv") + " --budget-hours -1 --out " + q(dir / "x.json"),
                dir.path()) == 2);
  CHECK_FALSE(fs::exists(dir / "x.json"));

  spit(dir / "empty.csv", "id,domain,duration_sec,frame_count,mean_log_lr,mode\n");
  CHECK(run_cli("select --scores " + q(dir / "empty.csv") + " --budget-n 1 --out " + q(dir / "x.json"),
                dir.path()) == 2);

  // Bimodal scores: hi* ids around +2, lo* ids around -2.
  std::string csv = "id,domain,duration_sec,frame_count,mean_log_lr,mode\n";
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const bool high = i % 2 == 0;
    csv += (high ? "hi" : "lo") + std::to_string(i) + ",,1,100," +
           std::to_string((high ? 2.0 : -2.0) + 0.1 * rng.normal()) + ",geometric\n";
  }
  spit(dir / "bimodal.csv", csv);
  REQUIRE(run_cli("select --scores " + q(dir / "bimodal.csv") + " --auto --auto-k 2 --out " +
                      q(dir / "auto.json") + " --ids-out " + q(dir / "auto.ids"),
                  dir.path()) == 0);
  const auto ids = read_id_list(dir / "auto.ids");
  REQUIRE_FALSE(ids.empty());
  for (const auto& id : ids) CHECK(id.rfind("hi", 0) == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "auto.json"))["threshold"].is_number());
}
