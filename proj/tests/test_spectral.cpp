#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "hmmclust/spectral.hpp"
#include "oracles.hpp"

using namespace hmmclust;

namespace {

Eigen::MatrixXd random_similarity(std::mt19937_64& rng, int n, double lo = 0.01) {
  std::uniform_real_distribution<double> u(lo, 1.0);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s(i, j) = s(j, i) = u(rng);
  return s;
}

Eigen::MatrixXd random_points(std::mt19937_64& rng, int n, int e) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd p(n, e);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = g(rng);
  return p;
}

/// Same partition up to relabeling.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("degree vector examples") {
  Eigen::MatrixXd s(2, 2);
  s << 0, 1, 1, 0;
  CHECK(degree_vector(s) == Eigen::Vector2d(1, 1));

  const double a = 0.3;
  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(3, 3, a);
  t.diagonal().setZero();
  const auto k = degree_vector(t);
  for (int i = 0; i < 3; ++i) CHECK(k(i) == doctest::Approx(2 * a).epsilon(1e-15));
}

TEST_CASE("near-zero rows are a degenerate graph naming the vertex") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(3, 3, 0.5);
  s.diagonal().setZero();
  s(2, 0) = s(0, 2) = 1e-15;
  s(2, 1) = s(1, 2) = 1e-15;
  const std::vector<std::string> ids{"alice", "bob", "carol"};
  try {
    degree_vector(s, ids);
    FAIL("expected a degenerate graph error");
  } catch (const DegenerateGraphError& e) {
    const std::string what = e.what();
    CHECK(what.find("carol") != std::string::npos);
    CHECK(what.find("alice") == std::string::npos);
    CHECK(e.exit_code() == 4);
  }
  CHECK_THROWS_AS(normalized_affinity(s), DegenerateGraphError);
}

TEST_CASE("degree_vector rejects asymmetric or negative input") {
  Eigen::MatrixXd s(2, 2);
  s << 0, 1, 0.5, 0;
  CHECK_THROWS_AS(degree_vector(s), ParameterError);
  s << 0, -1, -1, 0;
  CHECK_THROWS_AS(degree_vector(s), ParameterError);
}

TEST_CASE("normalized affinity examples") {
  Eigen::MatrixXd s(2, 2);
  s << 0, 1, 1, 0;
  CHECK(normalized_affinity(s) == s);

  Eigen::MatrixXd t = Eigen::MatrixXd::Constant(3, 3, 0.7);
  t.diagonal().setZero();
  const auto z = normalized_affinity(t);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(z(i, j) == doctest::Approx(i == j ? 0.0 : 0.5).epsilon(1e-15));
}

TEST_CASE("normalized affinity is symmetric and scale invariant") {
  std::mt19937_64 rng(11);
  const auto s = random_similarity(rng, 9);
  const auto z = normalized_affinity(s);
  CHECK((z - z.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  for (double c : {1e-6, 0.37, 5.0, 1e8}) {
    const Eigen::MatrixXd scaled = c * s;
    CHECK((normalized_affinity(scaled) - z).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("spectrum of small graphs") {
  Eigen::MatrixXd two(2, 2);
  two << 0, 1, 1, 0;
  const auto d2 = eigendecompose(two);
  CHECK(d2.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(d2.eigenvalues(1) == doctest::Approx(-1.0).epsilon(1e-14));

  Eigen::MatrixXd three = Eigen::MatrixXd::Constant(3, 3, 1.0);
  three.diagonal().setZero();
  const auto d3 = eigendecompose(normalized_affinity(three));
  CHECK(d3.eigenvalues(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(d3.eigenvalues(1) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(d3.eigenvalues(2) == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("eigenpairs of a random symmetric matrix") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd z(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) z(i, j) = z(j, i) = u(rng);
  const auto dec = eigendecompose(z);
  for (int c = 0; c < 6; ++c) {
    const Eigen::VectorXd v = dec.coordinates.col(c);
    CHECK((z * v - dec.eigenvalues(c) * v).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::Index pivot;
    v.cwiseAbs().maxCoeff(&pivot);
    CHECK(v(pivot) > 0.0);
  }
  for (int c = 1; c < 6; ++c) CHECK(dec.eigenvalues(c) <= dec.eigenvalues(c - 1));
  const Eigen::MatrixXd rebuilt = dec.coordinates * dec.eigenvalues.asDiagonal() * dec.coordinates.transpose();
  CHECK((z - rebuilt).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("eigendecompose rejects asymmetric input") {
  Eigen::MatrixXd z(2, 2);
  z << 0, 1, 1 + 1e-6, 0;
  CHECK_THROWS_AS(eigendecompose(z), ParameterError);
  z(1, 0) = 1 + 1e-12;
  CHECK_NOTHROW(eigendecompose(z));
}

TEST_CASE("spectrum bounds and Perron vector for connected graphs") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + trial * 7;
    const auto s = random_similarity(rng, n);
    const auto k = degree_vector(s);
    const auto dec = eigendecompose(normalized_affinity(s));
    CHECK(dec.eigenvalues.maxCoeff() <= 1.0 + 1e-8);
    CHECK(dec.eigenvalues.minCoeff() >= -1.0 - 1e-8);
    CHECK(std::abs(dec.eigenvalues(0) - 1.0) <= 1e-8);
    const Eigen::VectorXd perron = dec.coordinates.col(0);
    CHECK((perron.array() > 0.0).all());
    const Eigen::VectorXd expected = k.cwiseSqrt().normalized();
    CHECK((perron - expected).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("repeated eigendecomposition is bitwise identical with positive pivots") {
  std::mt19937_64 rng(14);
  const auto s = random_similarity(rng, 8);
  const auto z = normalized_affinity(s);
  const auto a = eigendecompose(z);
  const auto b = eigendecompose(z);
  CHECK((a.coordinates.array() == b.coordinates.array()).all());
  for (int c = 0; c < 8; ++c) {
    Eigen::Index pivot;
    a.coordinates.col(c).cwiseAbs().maxCoeff(&pivot);
    CHECK(a.coordinates(pivot, c) > 0.0);
  }
}

TEST_CASE("embed keeps leading columns and optionally normalizes rows") {
  std::mt19937_64 rng(15);
  const auto s = random_similarity(rng, 7);
  const auto dec = eigendecompose(normalized_affinity(s));

  const auto full = embed(dec, 7);
  CHECK(full.coordinates == dec.coordinates);
  CHECK(full.e_dim == 7);

  const auto two = embed(dec, 2);
  REQUIRE(two.coordinates.rows() == 7);
  REQUIRE(two.coordinates.cols() == 2);
  CHECK(two.coordinates == dec.coordinates.leftCols(2));
  CHECK(two.eigenvalues == dec.eigenvalues);

  const auto unit = embed(dec, 2, true);
  for (Eigen::Index i = 0; i < 7; ++i) CHECK(std::abs(unit.coordinates.row(i).norm() - 1.0) <= 1e-12);

  CHECK_THROWS_AS(embed(dec, 0), ParameterError);
  CHECK_THROWS_AS(embed(dec, 8), ParameterError);
}

TEST_CASE("row normalization leaves zero rows at zero") {
  SpectralEmbedding<double> dec;
  dec.eigenvalues = Eigen::Vector3d(1, 0, -1);
  dec.coordinates = Eigen::MatrixXd::Zero(3, 3);
  dec.coordinates(0, 0) = 3;
  dec.coordinates(0, 1) = 4;
  dec.e_dim = 3;
  const auto out = embed(dec, 2, true);
  CHECK(out.coordinates(0, 0) == doctest::Approx(0.6));
  CHECK(out.coordinates(0, 1) == doctest::Approx(0.8));
  CHECK(out.coordinates.row(1).norm() == 0.0);
}

TEST_CASE("eigengaps") {
  const auto gaps = eigengaps(Eigen::Vector4d(1.0, 0.9, 0.2, -0.5));
  REQUIRE(gaps.size() == 3);
  CHECK(gaps(0) == doctest::Approx(0.1));
  CHECK(gaps(1) == doctest::Approx(0.7));
  CHECK(gaps(2) == doctest::Approx(0.7));
  CHECK(eigengaps(Eigen::VectorXd::Ones(1)).size() == 0);
}

TEST_CASE("kmeans separates two 1-D groups") {
  Eigen::MatrixXd p(4, 1);
  p << 0.0, 0.1, 9.9, 10.0;
  const auto r = kmeans(p, 2, 10, 42);
  CHECK(r.labels[0] == r.labels[1]);
  CHECK(r.labels[2] == r.labels[3]);
  CHECK(r.labels[0] != r.labels[2]);
  CHECK(r.inertia == doctest::Approx(0.01));
  CHECK_FALSE(r.empty_cluster);
}

TEST_CASE("kmeans with k = N puts every point alone") {
  std::mt19937_64 rng(16);
  const auto p = random_points(rng, 6, 2);
  const auto r = kmeans(p, 6, 3, 1);
  CHECK(std::set<int>(r.labels.begin(), r.labels.end()).size() == 6);
  CHECK(r.inertia == 0.0);
}

TEST_CASE("kmeans matches the exhaustive two-means minimum") {
  std::mt19937_64 rng(17);
  for (int instance = 0; instance < 20; ++instance) {
    const auto p = random_points(rng, 8, 2);
    const auto r = kmeans(p, 2, kDefaultRestarts, rng());
    CHECK(r.inertia == doctest::Approx(oracle::exhaustive_two_means_inertia(p)).epsilon(1e-10));
  }
}

TEST_CASE("kmeans inertia never increases and the result is self-consistent") {
  std::mt19937_64 rng(18);
  for (int instance = 0; instance < 10; ++instance) {
    const auto p = random_points(rng, 60, 3);
    const auto r = kmeans(p, 4, 5, rng());
    REQUIRE_FALSE(r.inertia_trace.empty());
    for (std::size_t t = 1; t < r.inertia_trace.size(); ++t)
      CHECK(r.inertia_trace[t] <= r.inertia_trace[t - 1] + 1e-12);
    CHECK(r.iterations <= kKmeansMaxIter);

    double inertia = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const int label = r.labels[static_cast<std::size_t>(i)];
      REQUIRE(label >= 0);
      REQUIRE(label < 4);
      inertia += (p.row(i) - r.centroids.row(label)).squaredNorm();
    }
    CHECK(inertia == doctest::Approx(r.inertia).epsilon(1e-12));
  }
}

TEST_CASE("kmeans is deterministic and independent of the worker count") {
  std::mt19937_64 rng(19);
  const auto p = random_points(rng, 80, 2);
  const auto a = kmeans(p, 3, 8, 77, 1);
  const auto b = kmeans(p, 3, 8, 77, 4);
  const auto c = kmeans(p, 3, 8, 77, 1);
  CHECK(a.labels == b.labels);
  CHECK(a.labels == c.labels);
  CHECK(a.inertia == b.inertia);
  CHECK((a.centroids.array() == b.centroids.array()).all());
}

TEST_CASE("kmeans handles duplicate points") {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(5, 2);
  p.row(4) << 1.0, 1.0;
  const auto r = kmeans(p, 3, 4, 5);
  CHECK(r.labels.size() == 5);
  CHECK(r.inertia == 0.0);
}

TEST_CASE("kmeans parameter errors") {
  const Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(kmeans(p, 4), ParameterError);
  CHECK_THROWS_AS(kmeans(p, 0), ParameterError);
  CHECK_THROWS_AS(kmeans(p, 2, 0), ParameterError);
  Eigen::MatrixXd bad = p;
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(kmeans(bad, 2), ParameterError);
}

TEST_CASE("scaling the similarity leaves the clustering unchanged") {
  std::mt19937_64 rng(20);
  // two noisy blocks
  const int n = 20;
  std::uniform_real_distribution<double> strong(0.6, 1.0), weak(0.0, 0.05);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s(i, j) = s(j, i) = ((i < n / 2) == (j < n / 2)) ? strong(rng) : weak(rng);

  auto cluster = [](const Eigen::MatrixXd& sim) {
    const auto emb = embed(eigendecompose(normalized_affinity(sim)), 2);
    return kmeans(emb.coordinates, 2, 10, 3).labels;
  };
  const auto base = cluster(s);
  const Eigen::MatrixXd scaled = 1e-3 * s;
  CHECK(same_partition(base, cluster(scaled)));
  std::vector<int> truth(n);
  for (int i = 0; i < n; ++i) truth[static_cast<std::size_t>(i)] = i < n / 2;
  CHECK(same_partition(base, truth));
}

TEST_CASE("long double instantiation") {
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> s(3, 3);
  s << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  const auto dec = eigendecompose(normalized_affinity(s));
  CHECK(static_cast<double>(dec.eigenvalues(0)) == doctest::Approx(1.0));
  const auto r = kmeans(dec.coordinates.leftCols(2).eval(), 2, 2, 1);
  CHECK(r.labels.size() == 3);
}
