#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hmmclust/errors.hpp"
#include "hmmclust/random.hpp"

namespace hmmclust {

/// One entity's temporally ordered symbol stream.
struct ObservationSequence {
  std::string id;
  std::vector<int> symbols;
  std::optional<std::string> label;

  std::size_t length() const { return symbols.size(); }
  bool operator==(const ObservationSequence&) const = default;
};

/// Discrete first-order HMM. Rows of `transition` and `emission` are
/// distributions: transition(i, j) = Pr(x_t = j | x_{t-1} = i) and
/// emission(i, k) = Pr(o_t = k | x_t = i).
template <typename Scalar = double>
struct DiscreteHmm {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector initial;
  Matrix transition;
  Matrix emission;

  Eigen::Index n_states() const { return transition.rows(); }
  Eigen::Index n_symbols() const { return emission.cols(); }
};

template <typename Scalar = double>
struct FitReport {
  DiscreteHmm<Scalar> model;
  std::vector<Scalar> loglik_trace;
  int iterations = 0;
  bool converged = false;

  Scalar final_loglik() const { return loglik_trace.back(); }
};

/// Entries below this are raised to it after every M-step so that
/// cross-evaluation of one sequence under another's model stays finite.
inline constexpr double kProbabilityFloor = 1e-10;
inline constexpr double kDefaultEmTolerance = 1e-6;
inline constexpr int kDefaultEmMaxIter = 200;

namespace detail {

template <typename Derived>
bool is_distribution(const Eigen::MatrixBase<Derived>& row, double tol) {
  using Scalar = typename Derived::Scalar;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    const Scalar v = row(k);
    if (!(v >= Scalar(0) && v <= Scalar(1))) return false;
  }
  using std::abs;
  return abs(row.sum() - Scalar(1)) <= Scalar(tol);
}

template <typename Derived>
void floor_and_renormalize(Eigen::MatrixBase<Derived>&& row, double floor) {
  using Scalar = typename Derived::Scalar;
  for (Eigen::Index k = 0; k < row.size(); ++k)
    if (row(k) < Scalar(floor)) row(k) = Scalar(floor);
  row /= row.sum();
}

template <typename Scalar>
void check_symbols(std::span<const int> symbols, Eigen::Index n_symbols) {
  for (std::size_t t = 0; t < symbols.size(); ++t) {
    if (symbols[t] < 0 || symbols[t] >= n_symbols)
      throw InputError("symbol " + std::to_string(symbols[t]) + " at position " + std::to_string(t) +
                       " is outside the model alphabet of size " + std::to_string(n_symbols));
  }
}

template <typename Scalar>
int sample_categorical(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& probs,
                       std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    acc += static_cast<double>(probs(k));
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

/// Scaled forward pass. alpha row t holds Pr(x_t | o_1..o_t); scale(t) holds
/// Pr(o_t | o_1..o_{t-1}). Returns false if some prefix has probability zero.
template <typename Scalar>
bool forward_scaled(const DiscreteHmm<Scalar>& model, std::span<const int> symbols,
                    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& alpha,
                    Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& scale) {
  const auto T = static_cast<Eigen::Index>(symbols.size());
  const Eigen::Index n = model.n_states();
  alpha.resize(T, n);
  scale.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const int o = symbols[static_cast<std::size_t>(t)];
    if (t == 0) {
      alpha.row(0) = model.initial.transpose().cwiseProduct(model.emission.col(o).transpose());
    } else {
      alpha.row(t).noalias() = alpha.row(t - 1) * model.transition;
      alpha.row(t).array() *= model.emission.col(o).transpose().array();
    }
    const Scalar c = alpha.row(t).sum();
    if (!(c > Scalar(0))) return false;
    scale(t) = c;
    alpha.row(t) /= c;
  }
  return true;
}

template <typename Scalar>
struct SufficientStats {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Scalar loglik{};
  Vector first_posterior;
  Matrix transition_counts;
  Vector transition_occupancy;  // sum of gamma over t < T
  Matrix emission_counts;
  Vector emission_occupancy;  // sum of gamma over all t
};

template <typename Scalar>
SufficientStats<Scalar> expectation_step(const DiscreteHmm<Scalar>& model, std::span<const int> symbols) {
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  RowMatrix alpha;
  Vector scale;
  if (!forward_scaled(model, symbols, alpha, scale))
    throw NumericalError("sequence has zero probability under the current model");

  const auto T = static_cast<Eigen::Index>(symbols.size());
  const Eigen::Index n = model.n_states();
  const Eigen::Index m = model.n_symbols();

  SufficientStats<Scalar> stats;
  using std::log;
  stats.loglik = scale.array().log().sum();
  stats.transition_counts = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
  stats.transition_occupancy = Vector::Zero(n);
  stats.emission_counts = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, m);
  stats.emission_occupancy = Vector::Zero(n);

  Vector beta = Vector::Ones(n);
  Vector weighted(n);
  Vector gamma(n);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    if (t < T - 1) {
      const int next = symbols[static_cast<std::size_t>(t + 1)];
      weighted = model.emission.col(next).cwiseProduct(beta) / scale(t + 1);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          stats.transition_counts(i, j) += alpha(t, i) * model.transition(i, j) * weighted(j);
      beta.noalias() = model.transition * weighted;
    }
    gamma = alpha.row(t).transpose().cwiseProduct(beta);
    gamma /= gamma.sum();
    if (t < T - 1) stats.transition_occupancy += gamma;
    stats.emission_occupancy += gamma;
    stats.emission_counts.col(symbols[static_cast<std::size_t>(t)]) += gamma;
    if (t == 0) stats.first_posterior = gamma;
  }
  return stats;
}

template <typename Scalar>
DiscreteHmm<Scalar> maximization_step(const SufficientStats<Scalar>& stats, const DiscreteHmm<Scalar>& previous) {
  DiscreteHmm<Scalar> next = previous;
  const Scalar tiny = std::numeric_limits<Scalar>::min();

  next.initial = stats.first_posterior;
  for (Eigen::Index i = 0; i < previous.n_states(); ++i) {
    if (stats.transition_occupancy(i) >= tiny)
      next.transition.row(i) = stats.transition_counts.row(i) / stats.transition_occupancy(i);
    if (stats.emission_occupancy(i) >= tiny)
      next.emission.row(i) = stats.emission_counts.row(i) / stats.emission_occupancy(i);
  }

  floor_and_renormalize(next.initial.transpose(), kProbabilityFloor);
  for (Eigen::Index i = 0; i < next.n_states(); ++i) {
    floor_and_renormalize(next.transition.row(i), kProbabilityFloor);
    floor_and_renormalize(next.emission.row(i), kProbabilityFloor);
  }
  return next;
}

}  // namespace detail

/// Throws ParameterError unless every distribution in the model is valid within `tol`.
template <typename Scalar>
void validate(const DiscreteHmm<Scalar>& model, double tol = 1e-12) {
  const Eigen::Index n = model.transition.rows();
  if (n < 1 || model.transition.cols() != n || model.initial.size() != n || model.emission.rows() != n ||
      model.emission.cols() < 1)
    throw ParameterError("inconsistent HMM dimensions");
  if (!detail::is_distribution(model.initial, tol))
    throw ParameterError("initial distribution is not a probability vector");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!detail::is_distribution(model.transition.row(i), tol))
      throw ParameterError("transition row " + std::to_string(i) + " is not a probability vector");
    if (!detail::is_distribution(model.emission.row(i), tol))
      throw ParameterError("emission row " + std::to_string(i) + " is not a probability vector");
  }
}

/// Uniform initial distribution and transition rows; emission rows are
/// uniform plus seeded zero-sum noise bounded by `perturbation`.
/// perturbation = 0 gives the exact uniform (state-symmetric) model.
///
/// Transition rows are left uniform on purpose: a random transition offset
/// can point EM at an anti-persistent fixed point with indistinguishable
/// states, while emission offsets alone break the symmetry cleanly.
template <typename Scalar = double>
DiscreteHmm<Scalar> uninformative_init(int n_states, int n_symbols, double perturbation, std::uint64_t seed) {
  if (n_states < 1) throw ParameterError("n_states must be at least 1");
  if (n_symbols < 2) throw ParameterError("n_symbols must be at least 2");
  if (!(perturbation >= 0.0 && perturbation <= 0.1)) throw ParameterError("perturbation must lie in [0, 0.1]");

  std::mt19937_64 rng(seed);
  // Noise is centred along rows (each row stays a distribution) and along
  // columns (no two states receive the same offset).
  auto noisy_rows = [&](Eigen::Index rows, Eigen::Index width) {
    const double base = 1.0 / static_cast<double>(width);
    // keep every entry strictly positive for wide rows
    const double bound = std::min(perturbation, 0.5 * base);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(rows, width);
    if (bound > 0.0) {
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < width; ++k) noise(i, k) = 2.0 * uniform01(rng) - 1.0;
      noise.colwise() -= noise.rowwise().mean();
      if (rows > 1) noise.rowwise() -= noise.colwise().mean();
      const double peak = noise.cwiseAbs().maxCoeff();
      if (peak > 0.0) noise *= bound / peak;
    }
    Eigen::MatrixXd out = (noise.array() + base).matrix();
    for (Eigen::Index i = 0; i < rows; ++i) out.row(i) /= out.row(i).sum();
    return out.cast<Scalar>().eval();
  };

  DiscreteHmm<Scalar> model;
  model.initial = DiscreteHmm<Scalar>::Vector::Constant(n_states, Scalar(1) / Scalar(n_states));
  model.transition = DiscreteHmm<Scalar>::Matrix::Constant(n_states, n_states, Scalar(1) / Scalar(n_states));
  model.emission = noisy_rows(n_states, n_symbols);
  return model;
}

/// log Pr(symbols | model) via the scaled forward recursion. Returns -inf
/// when the sequence has probability exactly zero.
template <typename Scalar>
Scalar forward_log_likelihood(const DiscreteHmm<Scalar>& model, std::span<const int> symbols) {
  detail::check_symbols<Scalar>(symbols, model.n_symbols());
  if (symbols.empty()) throw InputError("empty observation sequence");

  using Vector = typename DiscreteHmm<Scalar>::Vector;
  const Eigen::Index n = model.n_states();
  Vector alpha = model.initial.cwiseProduct(model.emission.col(symbols[0]));
  Vector next(n);
  using std::log;
  Scalar loglik(0);
  for (std::size_t t = 0;; ++t) {
    const Scalar c = alpha.sum();
    if (!(c > Scalar(0))) return -std::numeric_limits<Scalar>::infinity();
    loglik += log(c);
    alpha /= c;
    if (t + 1 == symbols.size()) break;
    next.noalias() = model.transition.transpose() * alpha;
    alpha = next.cwiseProduct(model.emission.col(symbols[t + 1]));
  }
  return loglik;
}

template <typename Scalar>
Scalar forward_log_likelihood(const DiscreteHmm<Scalar>& model, const ObservationSequence& seq) {
  return forward_log_likelihood(model, std::span<const int>(seq.symbols));
}

/// Smoothed state posteriors: row t is Pr(x_t = i | whole sequence).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> posterior_marginals(const DiscreteHmm<Scalar>& model,
                                                                          std::span<const int> symbols) {
  detail::check_symbols<Scalar>(symbols, model.n_symbols());
  if (symbols.empty()) throw InputError("empty observation sequence");

  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = typename DiscreteHmm<Scalar>::Vector;
  RowMatrix alpha;
  Vector scale;
  if (!detail::forward_scaled(model, symbols, alpha, scale))
    throw NumericalError("sequence has zero probability under the model");

  const auto T = alpha.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gamma(T, model.n_states());
  Vector beta = Vector::Ones(model.n_states());
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    if (t < T - 1) {
      const Vector weighted =
          model.emission.col(symbols[static_cast<std::size_t>(t + 1)]).cwiseProduct(beta) / scale(t + 1);
      beta.noalias() = model.transition * weighted;
    }
    gamma.row(t) = alpha.row(t).cwiseProduct(beta.transpose());
    gamma.row(t) /= gamma.row(t).sum();
  }
  return gamma;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> posterior_marginals(const DiscreteHmm<Scalar>& model,
                                                                          const ObservationSequence& seq) {
  return posterior_marginals(model, std::span<const int>(seq.symbols));
}

/// Baum-Welch re-estimation of initial, transition and emission
/// probabilities. loglik_trace[i] is the log-likelihood of the i-th iterate
/// (trace[0] belongs to `init`); the returned model is the last iterate.
/// Stops when an iteration improves the log-likelihood by less than `tol`
/// or after `max_iter` updates.
template <typename Scalar>
FitReport<Scalar> baum_welch_fit(const ObservationSequence& seq, const DiscreteHmm<Scalar>& init,
                                 double tol = kDefaultEmTolerance, int max_iter = kDefaultEmMaxIter) {
  validate(init);
  if (!(tol > 0.0)) throw ParameterError("EM tolerance must be positive");
  if (max_iter < 1) throw ParameterError("EM iteration cap must be positive");
  if (seq.length() < 2) throw ParameterError("Baum-Welch needs a sequence of length >= 2 (" + seq.id + ")");
  const std::span<const int> symbols(seq.symbols);
  detail::check_symbols<Scalar>(symbols, init.n_symbols());

  FitReport<Scalar> report;
  report.model = init;
  for (;;) {
    const auto stats = detail::expectation_step(report.model, symbols);
    report.loglik_trace.push_back(stats.loglik);
    const std::size_t steps = report.loglik_trace.size();
    if (steps >= 2 && report.loglik_trace[steps - 1] - report.loglik_trace[steps - 2] < Scalar(tol)) {
      report.converged = true;
      break;
    }
    if (report.iterations == max_iter) break;
    report.model = detail::maximization_step(stats, report.model);
    ++report.iterations;
  }
  return report;
}

/// Draws a state path and its emissions; deterministic given `seed`.
template <typename Scalar>
ObservationSequence sample_sequence(const DiscreteHmm<Scalar>& model, std::size_t length, std::uint64_t seed,
                                    std::string id = {}) {
  if (length < 1) throw ParameterError("sample length must be at least 1");
  validate(model, 1e-9);

  std::mt19937_64 rng(seed);
  ObservationSequence seq;
  seq.id = std::move(id);
  seq.symbols.reserve(length);
  int state = detail::sample_categorical<Scalar>(model.initial.transpose(), rng);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = detail::sample_categorical<Scalar>(model.transition.row(state), rng);
    seq.symbols.push_back(detail::sample_categorical<Scalar>(model.emission.row(state), rng));
  }
  return seq;
}

}  // namespace hmmclust
