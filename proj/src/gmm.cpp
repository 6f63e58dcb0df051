#include "lrselect/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "lrselect/error.hpp"
#include "lrselect/numeric.hpp"
#include "lrselect/parallel.hpp"
#include "lrselect/random.hpp"

namespace lrselect {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Components whose total responsibility falls below this are re-seeded.
constexpr double kEmptyOccupancy = 1e-10;

// Frames per accumulation chunk. Chunk boundaries depend only on N, which
// keeps the reduction order (and so the result) independent of threads.
constexpr std::size_t kMinChunk = 4096;
constexpr std::size_t kMaxChunks = 64;

template <typename T>
double sq_distance(std::span<const T> x, std::span<const double> c) {
  double d = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double diff = static_cast<double>(x[i]) - c[i];
    d += diff * diff;
  }
  return d;
}

struct Moments {
  std::vector<double> mean;
  std::vector<double> variance;
};

template <typename T>
Moments global_moments(const BasicMatrix<T>& frames) {
  const std::size_t n = frames.rows(), dim = frames.cols();
  Moments m{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) m.mean[c] += frames(r, c);
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = frames(r, c) - m.mean[c];
      m.variance[c] += d * d;
    }
  for (auto& v : m.variance) v /= static_cast<double>(n);
  return m;
}

// Partial-Fisher-Yates sample of `k` distinct indices out of [0, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i, n - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

struct Params {
  std::vector<double> weights;
  BasicMatrix<double> means;
  BasicMatrix<double> variances;
};

template <typename T>
Params init_kmeans_plus_plus(const BasicMatrix<T>& frames, const EmConfig& config,
                             const Moments& global, std::span<const double> floor,
                             Rng& rng) {
  const std::size_t k = config.num_components, dim = frames.cols();
  std::vector<std::size_t> subset;
  if (frames.rows() > config.init_subsample_cap) {
    subset = sample_indices(frames.rows(), config.init_subsample_cap, rng);
    std::sort(subset.begin(), subset.end());
  } else {
    subset.resize(frames.rows());
    std::iota(subset.begin(), subset.end(), std::size_t{0});
  }
  const std::size_t n = subset.size();

  BasicMatrix<double> centers(k, dim);
  auto set_center = [&](std::size_t c, std::size_t frame) {
    auto src = frames.row(subset[frame]);
    for (std::size_t d = 0; d < dim; ++d) centers(c, d) = src[d];
  };

  set_center(0, static_cast<std::size_t>(rng.uniform_int(0, n - 1)));
  std::vector<double> dist2(n);
  for (std::size_t i = 0; i < n; ++i)
    dist2[i] = sq_distance(frames.row(subset[i]), centers.row(0));

  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (dist2[i] > 0.0 && acc > target) {
          pick = i;
          break;
        }
      }
      // Rounding can leave `target` past the running sum.
      for (std::size_t i = n; pick == n && i-- > 0;)
        if (dist2[i] > 0.0) pick = i;
    } else {
      pick = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
    }
    set_center(c, pick);
    for (std::size_t i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], sq_distance(frames.row(subset[i]), centers.row(c)));
  }

  // One k-means assignment pass, then per-cluster moments.
  std::vector<double> count(k, 0.0);
  BasicMatrix<double> s1(k, dim), s2(k, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = frames.row(subset[i]);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = sq_distance(x, centers.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    count[best] += 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - centers(best, d);
      s1(best, d) += diff;
      s2(best, d) += diff * diff;
    }
  }

  Params p{std::vector<double>(k), BasicMatrix<double>(k, dim), BasicMatrix<double>(k, dim)};
  double weight_total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double occ = count[c];
    p.weights[c] = std::max(occ, 1.0);
    weight_total += p.weights[c];
    for (std::size_t d = 0; d < dim; ++d) {
      if (occ > 0.0) {
        const double shift = s1(c, d) / occ;
        p.means(c, d) = centers(c, d) + shift;
        p.variances(c, d) = std::max(s2(c, d) / occ - shift * shift, floor[d]);
      } else {
        p.means(c, d) = centers(c, d);
        p.variances(c, d) = std::max(global.variance[d], floor[d]);
      }
    }
  }
  for (auto& w : p.weights) w /= weight_total;
  return p;
}

template <typename T>
Params init_random_frames(const BasicMatrix<T>& frames, const EmConfig& config,
                          const Moments& global, std::span<const double> floor, Rng& rng) {
  const std::size_t k = config.num_components, dim = frames.cols();
  const auto picks = sample_indices(frames.rows(), k, rng);
  Params p{std::vector<double>(k, 1.0 / static_cast<double>(k)), BasicMatrix<double>(k, dim),
           BasicMatrix<double>(k, dim)};
  for (std::size_t c = 0; c < k; ++c) {
    auto x = frames.row(picks[c]);
    for (std::size_t d = 0; d < dim; ++d) {
      p.means(c, d) = x[d];
      p.variances(c, d) = std::max(global.variance[d], floor[d]);
    }
  }
  return p;
}

struct Accumulator {
  Accumulator(std::size_t k, std::size_t dim) : occupancy(k, 0.0), s1(k, dim), s2(k, dim) {}
  std::vector<double> occupancy;
  BasicMatrix<double> s1;  // sum r (x - mu_old)
  BasicMatrix<double> s2;  // sum r (x - mu_old)^2
  double log_likelihood = 0.0;
};

struct EStepResult {
  double mean_log_likelihood;
  std::vector<double> frame_ll;
  Accumulator stats;
};

template <typename T>
EStepResult e_step(const DiagonalGmm& model, const BasicMatrix<T>& frames, unsigned threads) {
  const std::size_t n = frames.rows(), k = model.num_components(), dim = model.dim();
  const std::size_t chunk = std::max(kMinChunk, (n + kMaxChunks - 1) / kMaxChunks);
  const std::size_t num_chunks = (n + chunk - 1) / chunk;

  std::vector<Accumulator> partial(num_chunks, Accumulator(k, dim));
  std::vector<double> frame_ll(n);

  parallel_for(num_chunks, threads, [&](std::size_t ci) {
    Accumulator& acc = partial[ci];
    std::vector<double> terms(k);
    const std::size_t begin = ci * chunk, end = std::min(n, begin + chunk);
    for (std::size_t r = begin; r < end; ++r) {
      auto x = frames.row(r);
      model.component_log_likelihoods(x, terms);
      const double ll = log_sum_exp(terms);
      frame_ll[r] = ll;
      acc.log_likelihood += ll;
      for (std::size_t c = 0; c < k; ++c) {
        const double resp = std::exp(terms[c] - ll);
        if (resp == 0.0) continue;
        acc.occupancy[c] += resp;
        auto mu = model.means().row(c);
        auto s1 = acc.s1.row(c);
        auto s2 = acc.s2.row(c);
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = static_cast<double>(x[d]) - mu[d];
          s1[d] += resp * diff;
          s2[d] += resp * diff * diff;
        }
      }
    }
  });

  Accumulator total(k, dim);
  for (const auto& acc : partial) {
    total.log_likelihood += acc.log_likelihood;
    for (std::size_t c = 0; c < k; ++c) total.occupancy[c] += acc.occupancy[c];
    for (std::size_t i = 0; i < k * dim; ++i) {
      total.s1.values()[i] += acc.s1.values()[i];
      total.s2.values()[i] += acc.s2.values()[i];
    }
  }
  const double mean_ll = total.log_likelihood / static_cast<double>(n);
  return {mean_ll, std::move(frame_ll), std::move(total)};
}

template <typename T>
Params m_step(const DiagonalGmm& model, const BasicMatrix<T>& frames, const EStepResult& e,
              const Moments& global, std::span<const double> floor, std::size_t& reseeded) {
  const std::size_t n = frames.rows(), k = model.num_components(), dim = model.dim();
  Params p{std::vector<double>(k), BasicMatrix<double>(k, dim), BasicMatrix<double>(k, dim)};
  std::vector<std::size_t> empty;
  for (std::size_t c = 0; c < k; ++c) {
    const double occ = e.stats.occupancy[c];
    if (occ < kEmptyOccupancy) {
      empty.push_back(c);
      continue;
    }
    p.weights[c] = occ / static_cast<double>(n);
    for (std::size_t d = 0; d < dim; ++d) {
      const double shift = e.stats.s1(c, d) / occ;
      p.means(c, d) = model.means()(c, d) + shift;
      p.variances(c, d) = std::max(e.stats.s2(c, d) / occ - shift * shift, floor[d]);
    }
  }

  if (!empty.empty()) {
    // Re-seed collapsed components on the worst-explained frames.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(empty.size(), n);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        return e.frame_ll[a] < e.frame_ll[b] ||
                               (e.frame_ll[a] == e.frame_ll[b] && a < b);
                      });
    for (std::size_t i = 0; i < empty.size(); ++i) {
      const std::size_t c = empty[i];
      auto x = frames.row(order[i % take]);
      p.weights[c] = 1.0 / static_cast<double>(n);
      for (std::size_t d = 0; d < dim; ++d) {
        p.means(c, d) = x[d];
        p.variances(c, d) = std::max(global.variance[d], floor[d]);
      }
    }
    reseeded += empty.size();
  }

  const double total = std::accumulate(p.weights.begin(), p.weights.end(), 0.0);
  for (auto& w : p.weights) w /= total;
  return p;
}

DiagonalGmm to_model(Params p) {
  return DiagonalGmm(std::move(p.weights), std::move(p.means), std::move(p.variances));
}

template <typename T>
FitResult fit_impl(const BasicMatrix<T>& frames, const EmConfig& config) {
  config.validate();
  const std::size_t n = frames.rows(), dim = frames.cols();
  if (dim == 0) throw Error(ErrorCode::DegenerateData, "frames have zero dimensions");
  if (n < config.num_components)
    throw Error(ErrorCode::TooFewFrames, "need at least " + std::to_string(config.num_components) +
                                             " frames to fit " +
                                             std::to_string(config.num_components) +
                                             " components, got " + std::to_string(n));
  for (auto v : frames.values())
    if (!std::isfinite(v)) throw Error(ErrorCode::DegenerateData, "non-finite frame value");

  const Moments global = global_moments(frames);
  std::vector<double> floor(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    floor[d] = config.variance_floor_factor * global.variance[d];
    if (!(floor[d] > 0.0))
      throw Error(ErrorCode::DegenerateData,
                  "dimension " + std::to_string(d) + " has zero variance; no usable variance floor");
  }

  Rng rng(config.seed);
  Params init = config.init == InitMethod::KMeansPlusPlus
                    ? init_kmeans_plus_plus(frames, config, global, floor, rng)
                    : init_random_frames(frames, config, global, floor, rng);

  FitResult result;
  result.variance_floor = floor;
  DiagonalGmm model = to_model(std::move(init));
  for (std::size_t iter = 0;; ++iter) {
    EStepResult e = e_step(model, frames, config.threads);
    const double ll = e.mean_log_likelihood;
    if (!std::isfinite(ll))
      throw Error(ErrorCode::DegenerateData, "log-likelihood became non-finite during EM");
    if (!result.log_likelihood_history.empty()) {
      const double prev = result.log_likelihood_history.back();
      result.log_likelihood_history.push_back(ll);
      const double gain = (ll - prev) / std::max(std::abs(prev), 1e-300);
      if (gain < config.rel_tol) {
        result.converged = true;
        break;
      }
    } else {
      result.log_likelihood_history.push_back(ll);
    }
    if (iter == config.max_iterations) break;
    model = to_model(m_step(model, frames, e, global, floor, result.reseeded_components));
    result.iterations = iter + 1;
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

void EmConfig::validate() const {
  if (num_components < 1) throw Error(ErrorCode::InvalidSpec, "num_components must be >= 1");
  if (max_iterations < 1) throw Error(ErrorCode::InvalidSpec, "max_iterations must be >= 1");
  if (!(rel_tol >= 0.0)) throw Error(ErrorCode::InvalidSpec, "rel_tol must be >= 0");
  if (!(variance_floor_factor > 0.0 && variance_floor_factor < 1.0))
    throw Error(ErrorCode::InvalidSpec, "variance_floor_factor must lie in (0, 1)");
  if (init_subsample_cap < num_components)
    throw Error(ErrorCode::InvalidSpec, "init_subsample_cap must be >= num_components");
}

DiagonalGmm::DiagonalGmm(std::vector<double> weights, BasicMatrix<double> means,
                         BasicMatrix<double> variances)
    : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
  const std::size_t k = weights_.size();
  if (k == 0 || means_.cols() == 0)
    throw Error(ErrorCode::InvalidSpec, "a GMM needs at least one component and one dimension");
  if (means_.rows() != k || variances_.rows() != k || variances_.cols() != means_.cols())
    throw Error(ErrorCode::InvalidSpec, "GMM parameter shapes disagree");

  double sum = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w))
      throw Error(ErrorCode::InvalidSpec, "GMM weights must be positive and finite");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidSpec, "GMM weights must sum to 1");
  for (double m : means_.values())
    if (!std::isfinite(m)) throw Error(ErrorCode::InvalidSpec, "GMM means must be finite");
  for (double v : variances_.values())
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::InvalidSpec, "GMM variances must be positive and finite");

  const std::size_t dim = means_.cols();
  inv_variances_ = BasicMatrix<double>(k, dim);
  log_norms_.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    double log_det = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      inv_variances_(c, d) = 1.0 / variances_(c, d);
      log_det += std::log(variances_(c, d));
    }
    log_norms_[c] = std::log(weights_[c]) - 0.5 * (static_cast<double>(dim) * kLog2Pi + log_det);
  }
}

template <typename T>
void DiagonalGmm::component_terms(std::span<const T> frame, std::span<double> out) const {
  const std::size_t dim = this->dim();
  if (frame.size() != dim)
    throw Error(ErrorCode::DimMismatch, "frame has dimension " + std::to_string(frame.size()) +
                                            ", model expects " + std::to_string(dim));
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    auto mu = means_.row(c);
    auto inv = inv_variances_.row(c);
    double quad = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = static_cast<double>(frame[d]) - mu[d];
      quad += diff * diff * inv[d];
    }
    out[c] = log_norms_[c] - 0.5 * quad;
  }
}

void DiagonalGmm::component_log_likelihoods(std::span<const double> frame,
                                            std::span<double> out) const {
  component_terms(frame, out);
}

void DiagonalGmm::component_log_likelihoods(std::span<const float> frame,
                                            std::span<double> out) const {
  component_terms(frame, out);
}

double DiagonalGmm::log_density(std::span<const double> frame) const {
  std::vector<double> terms(num_components());
  component_terms(frame, std::span<double>(terms));
  return log_sum_exp(terms);
}

double DiagonalGmm::log_density(std::span<const float> frame) const {
  std::vector<double> terms(num_components());
  component_terms(frame, std::span<double>(terms));
  return log_sum_exp(terms);
}

std::vector<double> DiagonalGmm::posteriors(std::span<const double> frame) const {
  std::vector<double> terms(num_components());
  component_terms(frame, std::span<double>(terms));
  const double total = log_sum_exp(terms);
  for (auto& t : terms) t = std::exp(t - total);
  return terms;
}

FitResult fit_gmm(const BasicMatrix<float>& frames, const EmConfig& config) {
  return fit_impl(frames, config);
}

FitResult fit_gmm(const BasicMatrix<double>& frames, const EmConfig& config) {
  return fit_impl(frames, config);
}

std::vector<double> frame_log_densities(const DiagonalGmm& model, const FeatureMatrix& matrix) {
  if (matrix.cols() != model.dim())
    throw Error(ErrorCode::DimMismatch, "feature dimension " + std::to_string(matrix.cols()) +
                                            " does not match model dimension " +
                                            std::to_string(model.dim()));
  std::vector<double> out(matrix.rows());
  std::vector<double> terms(model.num_components());
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    model.component_log_likelihoods(matrix.row(r), terms);
    out[r] = log_sum_exp(terms);
  }
  return out;
}

double mean_log_likelihood(const DiagonalGmm& model, const FeatureMatrix& matrix) {
  const auto ll = frame_log_densities(model, matrix);
  if (ll.empty()) throw Error(ErrorCode::EmptyInput, "feature matrix has no frames");
  return pairwise_sum(ll) / static_cast<double>(ll.size());
}

}  // namespace lrselect
