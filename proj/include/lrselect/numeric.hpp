#pragma once

#include <span>

namespace lrselect {

/// log(sum(exp(x))) without forming exp(x) for large x. Returns -inf for an
/// empty span or when every element is -inf.
double log_sum_exp(std::span<const double> values);

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// length of the input, so results are reproducible.
double pairwise_sum(std::span<const double> values);

/// Neumaier-compensated summation.
class CompensatedSum {
 public:
  void add(double value);
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace lrselect
