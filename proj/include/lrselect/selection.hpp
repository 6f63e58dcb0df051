#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrselect/scoring.hpp"

namespace lrselect {

/// Largest exponent passed to exp() when converting log scores back to
/// linear ratios; larger values are clamped with a warning.
inline constexpr double kMaxLinearExponent = 700.0;

/// Selection stopping rule: a cap in hours or in utterance count.
class Budget {
 public:
  static Budget hours(double hours);
  static Budget cardinality(std::size_t count);

  bool is_hours() const { return std::holds_alternative<double>(value_); }
  double hours_value() const { return std::get<double>(value_); }
  std::size_t cardinality_value() const { return std::get<std::size_t>(value_); }

  friend bool operator==(const Budget&, const Budget&) = default;

 private:
  explicit Budget(std::variant<double, std::size_t> v) : value_(v) {}
  std::variant<double, std::size_t> value_;
};

struct SelectedUtterance {
  std::string id;
  double mean_log_lr = 0.0;
  double duration_sec = 0.0;
  std::optional<std::string> domain;

  friend bool operator==(const SelectedUtterance&, const SelectedUtterance&) = default;
};

enum class SelectionMode { Budget, Auto };

struct SelectionResult {
  SelectionMode mode = SelectionMode::Budget;
  std::optional<Budget> budget;
  /// In selection order: score descending, ties by ascending id.
  std::vector<SelectedUtterance> selected;
  double objective_value = 0.0;
  double total_hours = 0.0;
  std::optional<double> threshold;

  friend bool operator==(const SelectionResult&, const SelectionResult&) = default;
};

struct AutoBudgetConfig {
  std::size_t num_components = 3;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 50;
};

/// exp(mean_log_lr), clamped at exp(kMaxLinearExponent).
double linear_ratio(double mean_log_lr);

/// Modular objective: sum of linear likelihood ratios. Zero for the empty set.
double f_lr(std::span<const LrScore> scores);
double f_lr(std::span<const SelectedUtterance> selected);

/// Scores ordered by mean_log_lr descending, ties by ascending id.
std::vector<LrScore> rank_scores(std::span<const LrScore> scores);

/// Greedy maximization of f_lr under a budget. Because every marginal gain
/// is independent of the current set, the greedy step reduces to walking
/// the ranked list: a count budget takes a prefix, an hours budget adds each
/// utterance that still fits and skips those that do not.
SelectionResult greedy_select(std::span<const LrScore> scores, const Budget& budget);

/// Mean of the highest-weighted component of a 1-D GMM fitted to the
/// scores. Equal weights resolve to the larger mean.
double auto_threshold(std::span<const LrScore> scores, const AutoBudgetConfig& config);

/// Every utterance scoring strictly above `threshold`, ranked.
SelectionResult select_above(std::span<const LrScore> scores, double threshold);

SelectionResult auto_select(std::span<const LrScore> scores, const AutoBudgetConfig& config);

nlohmann::ordered_json selection_to_json(const SelectionResult& result);
SelectionResult selection_from_json(const nlohmann::json& doc);

void write_selection(const std::filesystem::path& json_path, const SelectionResult& result);
void write_id_list(const std::filesystem::path& path, const SelectionResult& result);
SelectionResult read_selection(const std::filesystem::path& json_path);

}  // namespace lrselect
