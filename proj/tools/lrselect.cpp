// lrselect: likelihood-ratio based training-data selection.
//
//   lrselect gen        synthesize a multi-domain corpus
//   lrselect train-gmm  fit a diagonal GMM to (a subset of) a corpus
//   lrselect score      per-utterance likelihood-ratio scores
//   lrselect select     budgeted or automatic subset selection
//   lrselect report     composition of a selection by domain label
//
// Exit codes: 0 success, 2 usage/validation, 3 I/O, 4 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lrselect/corpus.hpp"
#include "lrselect/error.hpp"
#include "lrselect/gmm.hpp"
#include "lrselect/gmm_io.hpp"
#include "lrselect/scoring.hpp"
#include "lrselect/selection.hpp"
#include "lrselect/synthbench.hpp"

namespace {

using namespace lrselect;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kNumerical = 4 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
      return kIo;
    case ErrorCode::TooFewFrames:
    case ErrorCode::DegenerateData:
      return kNumerical;
    default:
      return kUsage;
  }
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string log_level = "warn";
};

struct GenOptions {
  std::string spec;
  std::string out;
  std::size_t dim = 0;
};

struct TrainOptions {
  std::string manifest;
  std::string ids_file;
  std::string out;
  std::size_t k = 512;
  std::size_t max_iterations = 50;
  double rel_tol = 1e-5;
  double variance_floor = 1e-3;
  std::string init = "kmeans_plus_plus";
};

struct ScoreOptions {
  std::string manifest;
  std::string target;
  std::string background;
  std::string mode = "geometric";
  std::string out;
};

struct SelectOptions {
  std::string scores;
  std::optional<double> budget_hours;
  std::optional<std::size_t> budget_n;
  bool automatic = false;
  std::size_t auto_k = 3;
  std::size_t auto_max_iterations = 50;
  std::string out;
  std::string ids_out;
};

struct ReportOptions {
  std::string selection;
  std::string manifest;
  std::string target_domain;
  bool pretty = false;
};

void print_json(const nlohmann::ordered_json& doc) { std::cout << doc.dump(2) << '\n'; }

int run_gen(const GlobalOptions& g, const GenOptions& o) {
  const auto specs = load_domain_specs(o.spec);
  std::size_t dim = o.dim;
  if (dim == 0) {
    if (specs.empty() || specs.front().mixture.empty())
      throw Error(ErrorCode::InvalidSpec, "cannot infer the feature dimension from an empty spec");
    dim = specs.front().mixture.front().mean.size();
  }
  validate_domain_specs(specs, dim);
  const auto manifest = generate_corpus(specs, dim, g.seed, o.out, g.threads);

  nlohmann::ordered_json summary;
  summary["manifest"] = (fs::path(o.out) / "manifest.jsonl").string();
  summary["utterances"] = manifest.size();
  summary["dim"] = dim;
  summary["total_hours"] = manifest.total_hours();
  print_json(summary);
  return kOk;
}

int run_train(const GlobalOptions& g, const TrainOptions& o) {
  EmConfig config;
  config.num_components = o.k;
  config.max_iterations = o.max_iterations;
  config.rel_tol = o.rel_tol;
  config.variance_floor_factor = o.variance_floor;
  config.init = parse_init_method(o.init);
  config.seed = g.seed;
  config.threads = g.threads;
  config.validate();

  const auto manifest = load_manifest(o.manifest);
  std::vector<std::string> ids;
  if (!o.ids_file.empty()) {
    ids = read_id_list(o.ids_file);
    if (ids.empty()) throw Error(ErrorCode::EmptyInput, "ids file " + o.ids_file + " lists no utterances");
  }
  if (manifest.empty()) throw Error(ErrorCode::EmptyInput, "manifest lists no utterances");
  const auto frames = pool_frames(manifest, ids);
  const auto fit = fit_gmm(frames, config);

  ModelMetadata meta{config, fingerprint(frames), fit.iterations, fit.log_likelihood_history.back()};
  save_model(o.out, fit.model, meta);

  nlohmann::ordered_json stats;
  stats["model"] = o.out;
  stats["k"] = fit.model.num_components();
  stats["d"] = fit.model.dim();
  stats["frames"] = frames.rows();
  stats["utterances"] = ids.empty() ? manifest.size() : ids.size();
  stats["iterations"] = fit.iterations;
  stats["converged"] = fit.converged;
  stats["final_log_likelihood"] = fit.log_likelihood_history.back();
  stats["log_likelihood_history"] = fit.log_likelihood_history;
  stats["reseeded_components"] = fit.reseeded_components;
  stats["corpus_fingerprint"] = meta.corpus_fingerprint;
  print_json(stats);
  return kOk;
}

int run_score(const GlobalOptions& g, const ScoreOptions& o) {
  const auto mode = parse_score_mode(o.mode);
  const auto target = load_model(o.target).model;
  const auto background = load_model(o.background).model;
  const auto manifest = load_manifest(o.manifest);
  if (target.dim() != background.dim())
    throw Error(ErrorCode::DimMismatch, "target and background models differ in dimension");

  ScoreTable table{mode, score_corpus(target, background, manifest, mode, g.threads)};
  write_scores_csv(o.out, table);

  nlohmann::ordered_json summary;
  summary["scores"] = o.out;
  summary["mode"] = std::string(to_string(mode));
  summary["utterances"] = table.scores.size();
  print_json(summary);
  return kOk;
}

int run_select(const SelectOptions& o) {
  const int chosen = int(o.budget_hours.has_value()) + int(o.budget_n.has_value()) + int(o.automatic);
  if (chosen != 1)
    throw Error(ErrorCode::InvalidSpec, "choose exactly one of --budget-hours, --budget-n, --auto");

  std::optional<Budget> budget;
  if (o.budget_hours) budget = Budget::hours(*o.budget_hours);
  if (o.budget_n) budget = Budget::cardinality(*o.budget_n);
  AutoBudgetConfig auto_config{o.auto_k, 0, o.auto_max_iterations};
  if (o.automatic && auto_config.num_components < 2)
    throw Error(ErrorCode::InvalidSpec, "--auto-k must be >= 2");

  const auto table = read_scores_csv(o.scores);
  if (table.scores.empty()) throw Error(ErrorCode::EmptyInput, "scores file holds no utterances");

  const auto result = budget ? greedy_select(table.scores, *budget) : auto_select(table.scores, auto_config);
  write_selection(o.out, result);
  if (!o.ids_out.empty()) write_id_list(o.ids_out, result);

  nlohmann::ordered_json summary;
  summary["selection"] = o.out;
  summary["mode"] = budget ? "budget" : "auto";
  summary["selected"] = result.selected.size();
  summary["total_hours"] = result.total_hours;
  summary["objective_value"] = result.objective_value;
  summary["threshold"] = result.threshold ? nlohmann::ordered_json(*result.threshold) : nlohmann::ordered_json(nullptr);
  print_json(summary);
  return kOk;
}

int run_report(const ReportOptions& o) {
  const auto selection = read_selection(o.selection);
  const auto manifest = load_manifest(o.manifest);
  const auto report = evaluate_selection(selection, manifest, o.target_domain);
  if (o.pretty) {
    std::cout << report_table(report);
  } else {
    print_json(report_to_json(report));
    std::cerr << report_table(report);
  }
  return kOk;
}

bool valid_log_level(const std::string& level) {
  for (const char* name : {"trace", "debug", "info", "warn", "err", "error", "critical", "off"})
    if (level == name) return true;
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-ratio training-data selection"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string("lrselect ") + kVersion);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", global.threads, "Worker threads (1 = bit-deterministic)")
      ->envname("LRSELECT_THREADS")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  app.add_option("--log-level", global.log_level, "trace|debug|info|warn|error|critical|off")
      ->envname("LRSELECT_LOG")
      ->capture_default_str();

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic multi-domain corpus");
  gen_cmd->add_option("--spec", gen.spec, "Domain spec JSON")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension (default: from the spec)");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train-gmm", "Fit a diagonal GMM by EM");
  train_cmd->add_option("--manifest", train.manifest, "Corpus manifest")->required();
  train_cmd->add_option("--ids-file", train.ids_file, "Train only on these utterance ids");
  train_cmd->add_option("--k", train.k, "Mixture components")->capture_default_str();
  train_cmd->add_option("--max-iterations", train.max_iterations)->capture_default_str();
  train_cmd->add_option("--rel-tol", train.rel_tol)->capture_default_str();
  train_cmd->add_option("--variance-floor", train.variance_floor,
                        "Floor as a fraction of the global variance")
      ->capture_default_str();
  train_cmd->add_option("--init", train.init, "kmeans_plus_plus|random_frames")->capture_default_str();
  train_cmd->add_option("--out", train.out, "Output model JSON")->required();

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Score every utterance by likelihood ratio");
  score_cmd->add_option("--manifest", score.manifest)->required();
  score_cmd->add_option("--target", score.target, "Target-domain model JSON")->required();
  score_cmd->add_option("--background", score.background, "Background model JSON")->required();
  score_cmd->add_option("--mode", score.mode, "geometric|arithmetic")->capture_default_str();
  score_cmd->add_option("--out", score.out, "Output CSV")->required();

  SelectOptions select;
  auto* select_cmd = app.add_subcommand("select", "Select a subset from scores");
  select_cmd->add_option("--scores", select.scores, "Score CSV")->required();
  select_cmd->add_option("--budget-hours", select.budget_hours, "Hours budget");
  select_cmd->add_option("--budget-n", select.budget_n, "Utterance-count budget");
  select_cmd->add_flag("--auto", select.automatic, "Automatic threshold from a score GMM");
  select_cmd->add_option("--auto-k", select.auto_k, "Components of the score GMM")->capture_default_str();
  select_cmd->add_option("--auto-max-iterations", select.auto_max_iterations)->capture_default_str();
  select_cmd->add_option("--out", select.out, "Output selection JSON")->required();
  select_cmd->add_option("--ids-out", select.ids_out, "Output id list");

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Per-domain composition of a selection");
  report_cmd->add_option("--selection", report.selection)->required();
  report_cmd->add_option("--manifest", report.manifest)->required();
  report_cmd->add_option("--target-domain", report.target_domain)->required();
  report_cmd->add_flag("--pretty", report.pretty, "Print the table instead of JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (!valid_log_level(global.log_level)) {
    std::cerr << "error: unknown log level '" << global.log_level << "'\n";
    return kUsage;
  }
  auto logger = spdlog::stderr_color_mt("lrselect");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(global.log_level));

  try {
    if (*gen_cmd) return run_gen(global, gen);
    if (*train_cmd) return run_train(global, train);
    if (*score_cmd) return run_score(global, score);
    if (*select_cmd) return run_select(select);
    if (*report_cmd) return run_report(report);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [IoError]: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
