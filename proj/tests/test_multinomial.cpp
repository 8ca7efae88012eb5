#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "polydisp/multinomial.hpp"

using namespace polydisp;

namespace {

CategoryProbabilities simplex(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  int k = 0;
  for (double x : values) v[k++] = x;
  return CategoryProbabilities(v);
}

CountVector counts_of(std::initializer_list<int> values) {
  Eigen::VectorXi v(static_cast<Eigen::Index>(values.size()));
  int k = 0, total = 0;
  for (int x : values) {
    v[k++] = x;
    total += x;
  }
  return CountVector(v, total);
}

}  // namespace

TEST_CASE("CategoryProbabilities validation") {
  CHECK_NOTHROW(simplex({0.5, 0.5}));
  CHECK_NOTHROW(simplex({1.0, 0.0, 0.0}));
  CHECK_THROWS_AS(simplex({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(simplex({-0.1, 1.1}), std::invalid_argument);
  CHECK_THROWS_AS(simplex({1.0}), std::invalid_argument);
}

TEST_CASE("CountVector validation") {
  CHECK_NOTHROW(counts_of({1, 2, 3}));
  Eigen::VectorXi bad(2);
  bad << 1, 2;
  CHECK_THROWS_AS(CountVector(bad, 4), std::invalid_argument);
  bad << -1, 5;
  CHECK_THROWS_AS(CountVector(bad, 4), std::invalid_argument);
}

TEST_CASE("multinomial_pmf examples") {
  // Degenerate distribution puts all mass on the matching count vector.
  CHECK(multinomial_pmf(counts_of({5, 0, 0}), simplex({1.0, 0.0, 0.0})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(multinomial_pmf(counts_of({1, 1}), simplex({0.5, 0.5})) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // 30 * 0.2 * 0.09 * 0.25
  CHECK(multinomial_pmf(counts_of({1, 2, 2}), simplex({0.2, 0.3, 0.5})) ==
        doctest::Approx(0.135).epsilon(1e-12));
  // Zero probability category with a positive count.
  CHECK(multinomial_pmf(counts_of({4, 1}), simplex({1.0, 0.0})) == 0.0);
  CHECK_THROWS_AS(multinomial_pmf(counts_of({1, 1}), simplex({0.2, 0.3, 0.5})),
                  std::invalid_argument);
}

TEST_CASE("pmf sums to one over the full support") {
  Rng rng(7);
  for (int J = 2; J <= 4; ++J) {
    // A couple of random simplexes per dimension plus the uniform one.
    for (int rep = 0; rep < 3; ++rep) {
      Eigen::VectorXd raw(J);
      for (int j = 0; j < J; ++j) {
        raw[j] = rep == 0 ? 1.0 : -std::log(rng.uniform());
      }
      raw /= raw.sum();
      const CategoryProbabilities p{raw};
      for (int total : {1, 4, 6}) {
        double sum = 0.0;
        oracles::for_each_composition(total, J, [&](const std::vector<int>& y) {
          Eigen::VectorXi v(J);
          for (int j = 0; j < J; ++j) v[j] = y[j];
          sum += multinomial_pmf(CountVector(v, total), p);
        });
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("multinomial_moments closed forms") {
  const MultinomialMoments sym = multinomial_moments(10, simplex({0.5, 0.5}));
  CHECK(sym.mean[0] == doctest::Approx(5.0));
  CHECK(sym.mean[1] == doctest::Approx(5.0));
  CHECK(sym.covariance(0, 0) == doctest::Approx(2.5));
  CHECK(sym.covariance(1, 1) == doctest::Approx(2.5));
  CHECK(sym.covariance(0, 1) == doctest::Approx(-2.5));

  const MultinomialMoments degen = multinomial_moments(7, simplex({1.0, 0.0}));
  CHECK(degen.covariance.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  const MultinomialMoments tri = multinomial_moments(5, simplex({0.2, 0.3, 0.5}));
  CHECK(tri.covariance(0, 1) == doctest::Approx(-0.3));

  // Structure: symmetric, rows sum to zero, positive semidefinite.
  const Eigen::MatrixXd& C = tri.covariance;
  CHECK((C - C.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(C.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);

  CHECK_THROWS_AS(multinomial_moments(0, simplex({0.5, 0.5})),
                  std::invalid_argument);
}

TEST_CASE("moments agree with empirical sampling") {
  const CategoryProbabilities p = simplex({0.2, 0.3, 0.5});
  const int total = 5;
  const int n = 100000;
  Rng rng(99);
  Eigen::MatrixXd draws(n, 3);
  for (int k = 0; k < n; ++k) {
    const CountVector y = multinomial_sample(total, p, rng);
    for (int j = 0; j < 3; ++j) draws(k, j) = y.counts[j];
  }
  const MultinomialMoments mom = multinomial_moments(total, p);
  const Eigen::VectorXd emp_mean = draws.colwise().mean();
  for (int j = 0; j < 3; ++j) {
    const double se = std::sqrt(mom.covariance(j, j) / n);
    CHECK(std::abs(emp_mean[j] - mom.mean[j]) < 4.0 * se);
  }
  const Eigen::MatrixXd centered = draws.rowwise() - emp_mean.transpose();
  for (int j = 0; j < 3; ++j) {
    for (int k = j; k < 3; ++k) {
      const Eigen::ArrayXd prod =
          centered.col(j).array() * centered.col(k).array();
      const double emp_cov = prod.mean();
      const double se =
          std::sqrt((prod - emp_cov).square().sum() / (n - 1.0)) / std::sqrt(n);
      CHECK(std::abs(emp_cov - mom.covariance(j, k)) < 4.0 * se);
    }
  }
}

TEST_CASE("multinomial_sample basics") {
  Rng rng(3);
  const CountVector all = multinomial_sample(4, simplex({1.0, 0.0, 0.0}), rng);
  CHECK(all.counts[0] == 4);
  CHECK(all.counts[1] == 0);
  CHECK(all.counts[2] == 0);

  const CountVector none = multinomial_sample(0, simplex({0.2, 0.3, 0.5}), rng);
  CHECK(none.total == 0);
  CHECK(none.counts.sum() == 0);

  // Counts always sum to the total, exactly.
  Rng rng2(17);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd raw(4);
    for (int j = 0; j < 4; ++j) raw[j] = -std::log(rng2.uniform());
    raw /= raw.sum();
    const CountVector y = multinomial_sample(11, CategoryProbabilities(raw), rng2);
    CHECK(y.counts.sum() == 11);
    CHECK(y.counts.minCoeff() >= 0);
  }
}

TEST_CASE("one large draw matches the simplex") {
  Rng rng(41);
  const CategoryProbabilities p = simplex({0.2, 0.3, 0.5});
  const int total = 10000;
  const CountVector y = multinomial_sample(total, p, rng);
  for (int j = 0; j < 3; ++j) {
    const double freq = static_cast<double>(y.counts[j]) / total;
    const double se = std::sqrt(p[j] * (1.0 - p[j]) / total);
    CHECK(std::abs(freq - p[j]) < 4.0 * se);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  const CategoryProbabilities p = simplex({0.1, 0.2, 0.3, 0.4});
  Rng a(2024), b(2024), c(2025);
  bool all_equal = true, any_diff = false;
  for (int rep = 0; rep < 50; ++rep) {
    const CountVector ya = multinomial_sample(9, p, a);
    const CountVector yb = multinomial_sample(9, p, b);
    const CountVector yc = multinomial_sample(9, p, c);
    if (ya.counts != yb.counts) all_equal = false;
    if (ya.counts != yc.counts) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("softmax_probs closed forms") {
  Eigen::VectorXd eta2(2);
  eta2 << 0.0, 0.0;
  const CategoryProbabilities thirds = softmax_probs(eta2, 0);
  for (int j = 0; j < 3; ++j) CHECK(thirds[j] == doctest::Approx(1.0 / 3));

  Eigen::VectorXd eta1(1);
  eta1 << 0.0;
  const CategoryProbabilities halves = softmax_probs(eta1, 0);
  CHECK(halves[0] == doctest::Approx(0.5));
  CHECK(halves[1] == doctest::Approx(0.5));

  // Intercept-only estimates with the first category as reference.
  Eigen::VectorXd eta(2);
  eta << -1.6361, -0.9162;
  const CategoryProbabilities pi = softmax_probs(eta, 0);
  CHECK(std::abs(pi[0] - 0.627) < 1e-3);
  CHECK(std::abs(pi[1] - 0.122) < 1e-3);
  CHECK(std::abs(pi[2] - 0.251) < 1e-3);
}

TEST_CASE("softmax_probs against the long-double oracle") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const int J = 2 + static_cast<int>(rng.uniform() * 4);
    const int ref = static_cast<int>(rng.uniform() * J);
    Eigen::VectorXd eta(J - 1);
    std::vector<double> eta_std(J - 1);
    for (int k = 0; k < J - 1; ++k) {
      eta[k] = (rng.uniform() - 0.5) * 40.0;
      eta_std[k] = eta[k];
    }
    const CategoryProbabilities pi = softmax_probs(eta, ref);
    const std::vector<double> expected = oracles::softmax_reference(eta_std, ref);
    for (int j = 0; j < J; ++j) {
      CHECK(pi[j] == doctest::Approx(expected[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax_probs is overflow-safe and invertible") {
  Eigen::VectorXd extreme(2);
  extreme << 700.0, -700.0;
  const CategoryProbabilities pi = softmax_probs(extreme, 0);
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    CHECK(std::isfinite(pi[j]));
    sum += pi[j];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // log of the output ratios recovers eta.
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd eta(3);
    for (int k = 0; k < 3; ++k) eta[k] = (rng.uniform() - 0.5) * 60.0;
    const int ref = rep % 4;
    const CategoryProbabilities p = softmax_probs(eta, ref);
    int k = 0;
    for (int j = 0; j < 4; ++j) {
      if (j == ref) continue;
      CHECK(std::log(p[j] / p[ref]) == doctest::Approx(eta[k]).epsilon(1e-10));
      ++k;
    }
  }

  Eigen::VectorXd bad(2);
  bad << std::numeric_limits<double>::infinity(), 0.0;
  CHECK_THROWS_AS(softmax_probs(bad, 0), std::invalid_argument);
  Eigen::VectorXd nan_eta(1);
  nan_eta << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax_probs(nan_eta, 0), std::invalid_argument);
}
