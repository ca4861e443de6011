#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hmmclust/errors.hpp"
#include "hmmclust/hmm.hpp"
#include "hmmclust/parallel.hpp"

namespace hmmclust {

template <typename Scalar = double>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Model-based distance set over a cohort: loglik(i, j) = log Pr(Y_j | model_i),
/// the symmetrized cross-fit distance and its kernel similarity.
template <typename Scalar = double>
struct DistanceSet {
  DenseMatrix<Scalar> loglik;
  DenseMatrix<Scalar> distance;
  DenseMatrix<Scalar> similarity;

  Eigen::Index size() const { return loglik.rows(); }
};

inline constexpr double kDefaultBandwidth = 2.0;

struct CrossLoglikOptions {
  /// Divide each entry by the length of the evaluated sequence.
  bool length_normalize = false;
  unsigned threads = 1;
  /// Called with (completed rows, total rows) as rows finish; may run on any worker.
  std::function<void(std::size_t, std::size_t)> progress;
};

/// Entry (i, j) is the log-likelihood of seqs[j] under models[i]. Entries are
/// computed independently, so the result does not depend on `threads`.
template <typename Scalar>
DenseMatrix<Scalar> cross_loglik_matrix(std::span<const DiscreteHmm<Scalar>> models,
                                        std::span<const ObservationSequence> seqs,
                                        const CrossLoglikOptions& options = {}) {
  if (models.size() != seqs.size())
    throw ParameterError("cross_loglik_matrix: " + std::to_string(models.size()) + " models but " +
                         std::to_string(seqs.size()) + " sequences");
  const auto n = static_cast<Eigen::Index>(models.size());
  DenseMatrix<Scalar> loglik(n, n);
  std::atomic<std::size_t> done{0};
  parallel_for(models.size(), options.threads, [&](std::size_t i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& seq = seqs[static_cast<std::size_t>(j)];
      Scalar value = forward_log_likelihood(models[i], seq);
      if (options.length_normalize) value /= static_cast<Scalar>(seq.length());
      loglik(static_cast<Eigen::Index>(i), j) = value;
    }
    const std::size_t finished = done.fetch_add(1) + 1;
    if (options.progress) options.progress(finished, models.size());
  });
  return loglik;
}

/// d(i, j) = |l_ii + l_jj - l_ij - l_ji|. Each unordered pair is evaluated
/// once and both sums are commutative, so the result is exactly symmetric,
/// has an exactly zero diagonal and commutes bitwise with index permutations.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> symmetric_distance(const Eigen::MatrixBase<Derived>& loglik) {
  using Scalar = typename Derived::Scalar;
  if (loglik.rows() != loglik.cols()) throw ParameterError("log-likelihood matrix must be square");
  if (!loglik.allFinite()) throw ParameterError("log-likelihood matrix has non-finite entries");

  const Eigen::Index n = loglik.rows();
  DenseMatrix<Scalar> distance = DenseMatrix<Scalar>::Zero(n, n);
  using std::abs;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Scalar d = abs((loglik(i, i) + loglik(j, j)) - (loglik(i, j) + loglik(j, i)));
      distance(i, j) = d;
      distance(j, i) = d;
    }
  }
  return distance;
}

/// s(i, j) = exp(-d(i, j) / bandwidth) off the diagonal and 0 on it.
/// Off-diagonal values that would underflow are held at the smallest normal
/// Scalar so that every pair keeps a strictly positive weight.
template <typename Derived>
DenseMatrix<typename Derived::Scalar> similarity_kernel(const Eigen::MatrixBase<Derived>& distance,
                                                        double bandwidth = kDefaultBandwidth) {
  using Scalar = typename Derived::Scalar;
  if (!(bandwidth > 0.0)) throw ParameterError("kernel bandwidth must be positive");
  if (distance.rows() != distance.cols()) throw ParameterError("distance matrix must be square");

  const Eigen::Index n = distance.rows();
  using std::abs;
  using std::exp;
  DenseMatrix<Scalar> similarity = DenseMatrix<Scalar>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (distance(i, i) != Scalar(0)) throw ParameterError("distance matrix must have a zero diagonal");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Scalar d = distance(i, j);
      if (!(d >= Scalar(0)) || !std::isfinite(static_cast<double>(d)))
        throw ParameterError("distance matrix entries must be finite and nonnegative");
      if (abs(d - distance(j, i)) > Scalar(1e-12) * std::max(Scalar(1), abs(d)))
        throw ParameterError("distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                             std::to_string(j) + ")");
      const Scalar s = std::max(exp(-d / Scalar(bandwidth)), std::numeric_limits<Scalar>::min());
      similarity(i, j) = s;
      similarity(j, i) = s;
    }
  }
  return similarity;
}

/// Full distance set for a cohort where models[i] was trained on seqs[i].
template <typename Scalar>
DistanceSet<Scalar> build_distance_set(std::span<const DiscreteHmm<Scalar>> models,
                                       std::span<const ObservationSequence> seqs, double bandwidth = kDefaultBandwidth,
                                       const CrossLoglikOptions& options = {}) {
  DistanceSet<Scalar> set;
  set.loglik = cross_loglik_matrix(models, seqs, options);
  set.distance = symmetric_distance(set.loglik);
  set.similarity = similarity_kernel(set.distance, bandwidth);
  return set;
}

}  // namespace hmmclust
