#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hmmclust/errors.hpp"
#include "hmmclust/parallel.hpp"
#include "hmmclust/random.hpp"

namespace hmmclust {

/// Vertices whose similarity degree falls below this are treated as isolated.
inline constexpr double kDegreeFloor = 1e-12;
inline constexpr int kKmeansMaxIter = 300;
inline constexpr int kDefaultRestarts = 10;

/// Eigenpairs of the normalized affinity sorted by descending eigenvalue.
/// `coordinates` holds the first `e_dim` eigenvectors as columns, so row i
/// is entity i in the spectral domain.
template <typename Scalar = double>
struct SpectralEmbedding {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eigenvalues;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> coordinates;
  Eigen::Index e_dim = 0;
};

template <typename Scalar = double>
struct ClusterResult {
  std::vector<int> labels;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> centroids;
  Scalar inertia{};
  /// Set when some cluster ended up with no members.
  bool empty_cluster = false;
  int iterations = 0;
  /// Inertia after every Lloyd update of the selected restart.
  std::vector<Scalar> inertia_trace;
};

namespace detail {

template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& m, double tol, const char* what) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) throw ParameterError(std::string(what) + " must be square");
  using std::abs;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (abs(m(i, j) - m(j, i)) > Scalar(tol))
        throw ParameterError(std::string(what) + " is not symmetric at (" + std::to_string(i) + ", " +
                             std::to_string(j) + ")");
}

inline std::string vertex_name(std::span<const std::string> ids, Eigen::Index i) {
  if (static_cast<std::size_t>(i) < ids.size()) return ids[static_cast<std::size_t>(i)];
  return "#" + std::to_string(i);
}

}  // namespace detail

/// k_i = sum_j s_ij. Throws DegenerateGraphError naming every vertex whose
/// degree is below the floor; `ids` is optional and only used for messages.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> degree_vector(const Eigen::MatrixBase<Derived>& similarity,
                                                                         std::span<const std::string> ids = {}) {
  using Scalar = typename Derived::Scalar;
  detail::require_symmetric(similarity, 1e-12, "similarity matrix");
  if ((similarity.array() < Scalar(0)).any()) throw ParameterError("similarity matrix has negative entries");

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> degree = similarity.rowwise().sum();
  std::string isolated;
  for (Eigen::Index i = 0; i < degree.size(); ++i) {
    if (degree(i) < Scalar(kDegreeFloor)) {
      if (!isolated.empty()) isolated += ", ";
      isolated += detail::vertex_name(ids, i);
    }
  }
  if (!isolated.empty())
    throw DegenerateGraphError("isolated vertices (degree < 1e-12) in similarity graph: " + isolated);
  return degree;
}

/// Z = K^{-1/2} S K^{-1/2}, the symmetric normalization of the random-walk matrix S K^{-1}.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> normalized_affinity(
    const Eigen::MatrixBase<Derived>& similarity, std::span<const std::string> ids = {}) {
  using Scalar = typename Derived::Scalar;
  const auto degree = degree_vector(similarity, ids);
  const Eigen::Index n = similarity.rows();
  using std::sqrt;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> z(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) z(i, j) = similarity(i, j) / sqrt(degree(i) * degree(j));
  return z;
}

/// Full symmetric eigendecomposition, eigenvalues descending. Each
/// eigenvector is signed so that its largest-magnitude entry (first on ties)
/// is positive.
template <typename Derived>
SpectralEmbedding<typename Derived::Scalar> eigendecompose(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_symmetric(z, 1e-10, "affinity matrix");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(z.derived().eval());
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");

  const Eigen::Index n = z.rows();
  SpectralEmbedding<Scalar> out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.coordinates = solver.eigenvectors().rowwise().reverse();
  out.e_dim = n;
  using std::abs;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index pivot = 0;
    for (Eigen::Index r = 1; r < n; ++r)
      if (abs(out.coordinates(r, c)) > abs(out.coordinates(pivot, c))) pivot = r;
    if (out.coordinates(pivot, c) < Scalar(0)) out.coordinates.col(c) *= Scalar(-1);
  }
  return out;
}

/// Keeps the leading `e_dim` eigenvectors; optionally rescales each nonzero row to unit length.
template <typename Scalar>
SpectralEmbedding<Scalar> embed(const SpectralEmbedding<Scalar>& decomposition, Eigen::Index e_dim,
                                bool row_normalize = false) {
  if (e_dim < 1 || e_dim > decomposition.coordinates.cols())
    throw ParameterError("embedding dimension " + std::to_string(e_dim) + " outside [1, " +
                         std::to_string(decomposition.coordinates.cols()) + "]");
  SpectralEmbedding<Scalar> out;
  out.eigenvalues = decomposition.eigenvalues;
  out.coordinates = decomposition.coordinates.leftCols(e_dim);
  out.e_dim = e_dim;
  if (row_normalize) {
    for (Eigen::Index i = 0; i < out.coordinates.rows(); ++i) {
      const Scalar norm = out.coordinates.row(i).norm();
      if (norm > Scalar(0)) out.coordinates.row(i) /= norm;
    }
  }
  return out;
}

/// gap(i) = lambda_i - lambda_{i+1}.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> eigengaps(const Eigen::MatrixBase<Derived>& eigenvalues) {
  const Eigen::Index n = eigenvalues.size();
  if (n < 2) return {};
  return eigenvalues.head(n - 1) - eigenvalues.tail(n - 1);
}

namespace detail {

template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
Scalar squared_distance(const PointMatrix<Scalar>& points, Eigen::Index i, const PointMatrix<Scalar>& centroids,
                        Eigen::Index c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

/// Greedy k-means++ seeding: each new center is the best of a few D^2-sampled
/// candidates, judged by the resulting potential.
template <typename Scalar>
PointMatrix<Scalar> seed_centroids(const PointMatrix<Scalar>& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  PointMatrix<Scalar> centroids(k, points.cols());
  const auto first = static_cast<Eigen::Index>(uniform_int(rng, 0, n - 1));
  centroids.row(0) = points.row(first);

  std::vector<Scalar> closest(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) closest[static_cast<std::size_t>(i)] = squared_distance(points, i, centroids, 0);

  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  for (int c = 1; c < k; ++c) {
    const Scalar potential = std::accumulate(closest.begin(), closest.end(), Scalar(0));
    Eigen::Index best = -1;
    Scalar best_potential = std::numeric_limits<Scalar>::infinity();
    for (int trial = 0; trial < trials; ++trial) {
      Eigen::Index candidate = n - 1;
      if (potential > Scalar(0)) {
        const Scalar target = static_cast<Scalar>(uniform01(rng)) * potential;
        Scalar acc(0);
        for (Eigen::Index i = 0; i < n; ++i) {
          acc += closest[static_cast<std::size_t>(i)];
          if (target < acc) {
            candidate = i;
            break;
          }
        }
      } else {
        candidate = static_cast<Eigen::Index>(uniform_int(rng, 0, n - 1));
      }
      Scalar trial_potential(0);
      for (Eigen::Index i = 0; i < n; ++i)
        trial_potential += std::min(closest[static_cast<std::size_t>(i)],
                                    Scalar((points.row(i) - points.row(candidate)).squaredNorm()));
      if (trial_potential < best_potential) {
        best_potential = trial_potential;
        best = candidate;
      }
    }
    centroids.row(c) = points.row(best);
    for (Eigen::Index i = 0; i < n; ++i)
      closest[static_cast<std::size_t>(i)] =
          std::min(closest[static_cast<std::size_t>(i)], squared_distance(points, i, centroids, c));
  }
  return centroids;
}

template <typename Scalar>
ClusterResult<Scalar> lloyd(const PointMatrix<Scalar>& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  std::mt19937_64 rng(seed);
  ClusterResult<Scalar> result;
  result.centroids = seed_centroids(points, k, rng);
  result.labels.assign(static_cast<std::size_t>(n), -1);

  auto assign = [&] {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      Scalar best_d = squared_distance(points, i, result.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const Scalar d = squared_distance(points, i, result.centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      auto& label = result.labels[static_cast<std::size_t>(i)];
      if (label != best) {
        label = best;
        changed = true;
      }
    }
    return changed;
  };
  auto inertia = [&] {
    Scalar total(0);
    for (Eigen::Index i = 0; i < n; ++i)
      total += squared_distance(points, i, result.centroids, result.labels[static_cast<std::size_t>(i)]);
    return total;
  };

  assign();
  for (result.iterations = 1;; ++result.iterations) {
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (int label : result.labels) ++counts[static_cast<std::size_t>(label)];
    // An empty cluster takes over the point farthest from its own centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] != 0) continue;
      Eigen::Index far = -1;
      Scalar far_d(-1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int own = result.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(own)] < 2) continue;
        const Scalar d = squared_distance(points, i, result.centroids, own);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) break;
      --counts[static_cast<std::size_t>(result.labels[static_cast<std::size_t>(far)])];
      result.labels[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
    }

    result.centroids.setZero();
    for (Eigen::Index i = 0; i < n; ++i) result.centroids.row(result.labels[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        result.centroids.row(c) /= static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
    result.inertia_trace.push_back(inertia());

    if (!assign() || result.iterations >= kKmeansMaxIter) break;
  }
  // labels may have moved after the last centroid update; the reported
  // inertia always matches the reported labels and centroids
  result.inertia = inertia();
  std::vector<bool> used(static_cast<std::size_t>(k), false);
  for (int label : result.labels) used[static_cast<std::size_t>(label)] = true;
  result.empty_cluster = std::find(used.begin(), used.end(), false) != used.end();
  return result;
}

}  // namespace detail

/// Best-of-restarts Lloyd's algorithm. Restart r is seeded from
/// derive_seed(seed, r); the lowest-inertia result wins, earliest restart on ties.
/// Restarts may run on `threads` workers without changing the outcome.
template <typename Derived>
ClusterResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points, int k,
                                               int restarts = kDefaultRestarts, std::uint64_t seed = 0,
                                               unsigned threads = 1) {
  using Scalar = typename Derived::Scalar;
  if (k < 1) throw ParameterError("k must be positive");
  if (restarts < 1) throw ParameterError("restarts must be positive");
  if (k > points.rows())
    throw ParameterError("k = " + std::to_string(k) + " exceeds the number of points (" +
                         std::to_string(points.rows()) + ")");
  if (!points.allFinite()) throw ParameterError("k-means input has non-finite coordinates");

  const detail::PointMatrix<Scalar> data = points;
  std::vector<ClusterResult<Scalar>> runs(static_cast<std::size_t>(restarts));
  parallel_for(runs.size(), threads, [&](std::size_t r) {
    runs[r] = detail::lloyd(data, k, derive_seed(seed, 0x6b6d65616e73ULL, r));
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  return std::move(runs[best]);
}

}  // namespace hmmclust
