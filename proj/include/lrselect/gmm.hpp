#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lrselect/matrix.hpp"

namespace lrselect {

enum class InitMethod { KMeansPlusPlus, RandomFrames };

struct EmConfig {
  std::size_t num_components = 512;
  std::size_t max_iterations = 50;
  /// Stop when the relative gain in mean log-likelihood drops below this.
  double rel_tol = 1e-5;
  /// Variance floor as a fraction of the global per-dimension variance.
  double variance_floor_factor = 1e-3;
  std::uint64_t seed = 0;
  InitMethod init = InitMethod::KMeansPlusPlus;
  /// Worker threads for the E-step. Results do not depend on this value.
  unsigned threads = 1;
  /// Frames used for k-means++ seeding are subsampled down to this many.
  std::size_t init_subsample_cap = 100000;

  void validate() const;
};

/// Diagonal-covariance Gaussian mixture. Immutable once constructed; the
/// per-component normalizers are cached for density evaluation.
class DiagonalGmm {
 public:
  DiagonalGmm() = default;
  /// Throws InvalidSpec if the weights do not sum to one, a variance is not
  /// positive, or any value is non-finite.
  DiagonalGmm(std::vector<double> weights, BasicMatrix<double> means,
              BasicMatrix<double> variances);

  std::size_t num_components() const { return weights_.size(); }
  std::size_t dim() const { return means_.cols(); }
  const std::vector<double>& weights() const { return weights_; }
  const BasicMatrix<double>& means() const { return means_; }
  const BasicMatrix<double>& variances() const { return variances_; }

  /// log sum_k w_k N(frame; mu_k, diag(var_k)). Throws DimMismatch.
  double log_density(std::span<const double> frame) const;
  double log_density(std::span<const float> frame) const;

  /// Per-component log(w_k N_k(frame)); `out` must hold K values.
  void component_log_likelihoods(std::span<const double> frame, std::span<double> out) const;
  void component_log_likelihoods(std::span<const float> frame, std::span<double> out) const;

  /// Component posteriors for one frame.
  std::vector<double> posteriors(std::span<const double> frame) const;

  friend bool operator==(const DiagonalGmm& a, const DiagonalGmm& b) {
    return a.weights_ == b.weights_ && a.means_ == b.means_ && a.variances_ == b.variances_;
  }

 private:
  template <typename T>
  void component_terms(std::span<const T> frame, std::span<double> out) const;

  std::vector<double> weights_;
  BasicMatrix<double> means_;
  BasicMatrix<double> variances_;
  BasicMatrix<double> inv_variances_;
  std::vector<double> log_norms_;  // log w_k - 0.5 (D log 2pi + sum log var)
};

struct FitResult {
  DiagonalGmm model;
  /// Mean per-frame log-likelihood under the parameters at the start of
  /// each EM iteration; the last entry belongs to `model`.
  std::vector<double> log_likelihood_history;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> variance_floor;
  std::size_t reseeded_components = 0;
};

/// Estimates a diagonal GMM by EM. Throws TooFewFrames when there are fewer
/// frames than components and DegenerateData when a dimension has zero
/// variance.
FitResult fit_gmm(const BasicMatrix<float>& frames, const EmConfig& config);
FitResult fit_gmm(const BasicMatrix<double>& frames, const EmConfig& config);

/// Per-frame log-densities of every row.
std::vector<double> frame_log_densities(const DiagonalGmm& model, const FeatureMatrix& matrix);

/// (1/T) sum_t log p(O_t). Throws DimMismatch.
double mean_log_likelihood(const DiagonalGmm& model, const FeatureMatrix& matrix);

}  // namespace lrselect
