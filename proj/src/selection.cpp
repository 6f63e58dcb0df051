#include "lrselect/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "lrselect/error.hpp"
#include "lrselect/gmm.hpp"
#include "lrselect/numeric.hpp"

namespace lrselect {
namespace {

// Relative slack when checking whether an utterance fits the remaining
// hours; absorbs rounding in the running duration sum.
constexpr double kBudgetSlack = 1e-12;

// Component weights closer than this are treated as tied.
constexpr double kWeightTieTolerance = 1e-9;

SelectedUtterance to_selected(const LrScore& s) {
  return {s.id, s.mean_log_lr, s.duration_sec, s.domain};
}

void finalize(SelectionResult& result) {
  CompensatedSum seconds;
  for (const auto& s : result.selected) seconds.add(s.duration_sec);
  result.total_hours = seconds.value() / 3600.0;
  result.objective_value = f_lr(std::span<const SelectedUtterance>(result.selected));
}

std::optional<std::string> optional_string(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<std::string>();
}

}  // namespace

Budget Budget::hours(double hours) {
  if (!(hours > 0.0) || !std::isfinite(hours))
    throw Error(ErrorCode::InvalidSpec, "hours budget must be positive and finite");
  return Budget(hours);
}

Budget Budget::cardinality(std::size_t count) {
  if (count == 0) throw Error(ErrorCode::InvalidSpec, "cardinality budget must be positive");
  return Budget(count);
}

double linear_ratio(double mean_log_lr) {
  if (mean_log_lr > kMaxLinearExponent) {
    spdlog::warn("likelihood ratio exp({}) clamped to exp({})", mean_log_lr, kMaxLinearExponent);
    return std::exp(kMaxLinearExponent);
  }
  return std::exp(mean_log_lr);
}

double f_lr(std::span<const LrScore> scores) {
  CompensatedSum sum;
  for (const auto& s : scores) sum.add(linear_ratio(s.mean_log_lr));
  return sum.value();
}

double f_lr(std::span<const SelectedUtterance> selected) {
  CompensatedSum sum;
  for (const auto& s : selected) sum.add(linear_ratio(s.mean_log_lr));
  return sum.value();
}

std::vector<LrScore> rank_scores(std::span<const LrScore> scores) {
  std::vector<LrScore> ranked(scores.begin(), scores.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const LrScore& a, const LrScore& b) {
    if (a.mean_log_lr != b.mean_log_lr) return a.mean_log_lr > b.mean_log_lr;
    return a.id < b.id;
  });
  return ranked;
}

SelectionResult greedy_select(std::span<const LrScore> scores, const Budget& budget) {
  if (scores.empty()) throw Error(ErrorCode::EmptyInput, "no scores to select from");
  const auto ranked = rank_scores(scores);

  SelectionResult result;
  result.mode = SelectionMode::Budget;
  result.budget = budget;
  if (budget.is_hours()) {
    const double limit = budget.hours_value() * 3600.0;
    const double slack = limit * kBudgetSlack;
    CompensatedSum used;
    for (const auto& s : ranked) {
      if (used.value() + s.duration_sec <= limit + slack) {
        used.add(s.duration_sec);
        result.selected.push_back(to_selected(s));
      }
    }
  } else {
    const std::size_t n = std::min(budget.cardinality_value(), ranked.size());
    for (std::size_t i = 0; i < n; ++i) result.selected.push_back(to_selected(ranked[i]));
  }
  finalize(result);
  return result;
}

double auto_threshold(std::span<const LrScore> scores, const AutoBudgetConfig& config) {
  if (config.num_components < 2)
    throw Error(ErrorCode::InvalidSpec, "automatic budget needs at least 2 mixture components");
  if (scores.empty()) throw Error(ErrorCode::TooFewFrames, "no scores to fit");

  std::set<double> distinct;
  for (const auto& s : scores) distinct.insert(s.mean_log_lr);
  if (distinct.size() == 1)
    throw Error(ErrorCode::DegenerateData, "all scores are identical; no threshold can be fitted");
  if (distinct.size() < config.num_components)
    throw Error(ErrorCode::TooFewFrames, "need at least " + std::to_string(config.num_components) +
                                             " distinct scores, found " +
                                             std::to_string(distinct.size()));

  BasicMatrix<double> data(scores.size(), 1);
  for (std::size_t i = 0; i < scores.size(); ++i) data(i, 0) = scores[i].mean_log_lr;

  EmConfig em;
  em.num_components = config.num_components;
  em.seed = config.seed;
  em.max_iterations = config.max_iterations;
  const auto fit = fit_gmm(data, em);

  const auto& w = fit.model.weights();
  std::size_t best = 0;
  for (std::size_t c = 1; c < w.size(); ++c) {
    const bool tied = std::abs(w[c] - w[best]) <= kWeightTieTolerance;
    if ((!tied && w[c] > w[best]) || (tied && fit.model.means()(c, 0) > fit.model.means()(best, 0)))
      best = c;
  }
  return fit.model.means()(best, 0);
}

SelectionResult select_above(std::span<const LrScore> scores, double threshold) {
  SelectionResult result;
  result.mode = SelectionMode::Auto;
  result.threshold = threshold;
  for (const auto& s : rank_scores(scores)) {
    if (!(s.mean_log_lr > threshold)) break;
    result.selected.push_back(to_selected(s));
  }
  if (result.selected.empty())
    spdlog::warn("EmptySelection: no utterance scores above the threshold {}", threshold);
  finalize(result);
  return result;
}

SelectionResult auto_select(std::span<const LrScore> scores, const AutoBudgetConfig& config) {
  return select_above(scores, auto_threshold(scores, config));
}

nlohmann::ordered_json selection_to_json(const SelectionResult& result) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["mode"] = result.mode == SelectionMode::Budget ? "budget" : "auto";
  if (result.budget) {
    ordered_json b;
    if (result.budget->is_hours())
      b["hours"] = result.budget->hours_value();
    else
      b["cardinality"] = result.budget->cardinality_value();
    doc["budget"] = b;
  } else {
    doc["budget"] = nullptr;
  }
  doc["threshold"] = result.threshold ? ordered_json(*result.threshold) : ordered_json(nullptr);
  doc["objective_value"] = result.objective_value;
  doc["total_hours"] = result.total_hours;
  ordered_json selected = ordered_json::array();
  for (const auto& s : result.selected) {
    ordered_json item;
    item["id"] = s.id;
    item["mean_log_lr"] = s.mean_log_lr;
    item["duration_sec"] = s.duration_sec;
    item["domain"] = s.domain ? ordered_json(*s.domain) : ordered_json(nullptr);
    selected.push_back(std::move(item));
  }
  doc["selected"] = std::move(selected);
  return doc;
}

SelectionResult selection_from_json(const nlohmann::json& doc) {
  try {
    SelectionResult r;
    const auto mode = doc.at("mode").get<std::string>();
    if (mode == "budget")
      r.mode = SelectionMode::Budget;
    else if (mode == "auto")
      r.mode = SelectionMode::Auto;
    else
      throw Error(ErrorCode::ParseError, "unknown selection mode '" + mode + "'");

    const auto& b = doc.at("budget");
    if (!b.is_null()) {
      if (b.contains("hours"))
        r.budget = Budget::hours(b.at("hours").get<double>());
      else
        r.budget = Budget::cardinality(b.at("cardinality").get<std::size_t>());
    }
    if (const auto& t = doc.at("threshold"); !t.is_null()) r.threshold = t.get<double>();
    r.objective_value = doc.at("objective_value").get<double>();
    r.total_hours = doc.at("total_hours").get<double>();
    for (const auto& item : doc.at("selected")) {
      r.selected.push_back({item.at("id").get<std::string>(), item.at("mean_log_lr").get<double>(),
                            item.at("duration_sec").get<double>(),
                            item.contains("domain") ? optional_string(item["domain"]) : std::nullopt});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed selection: ") + e.what());
  }
}

void write_selection(const std::filesystem::path& json_path, const SelectionResult& result) {
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + json_path.string());
  out << selection_to_json(result).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + json_path.string());
}

void write_id_list(const std::filesystem::path& path, const SelectionResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& s : result.selected) out << s.id << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

SelectionResult read_selection(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::MissingFile, "selection not found: " + json_path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, json_path.string() + ": " + e.what());
  }
  return selection_from_json(doc);
}

}  // namespace lrselect
