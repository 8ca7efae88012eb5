#include "polydisp/multinomial.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace polydisp {

CategoryProbabilities::CategoryProbabilities(Eigen::VectorXd probs)
    : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw std::invalid_argument(
        "CategoryProbabilities: need at least two categories");
  }
  double sum = 0.0;
  for (Eigen::Index j = 0; j < probs_.size(); ++j) {
    const double pj = probs_[j];
    if (!std::isfinite(pj) || pj < 0.0 || pj > 1.0) {
      throw std::invalid_argument(
          "CategoryProbabilities: entries must lie in [0, 1]");
    }
    sum += pj;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument(
        "CategoryProbabilities: entries must sum to 1 (got " +
        std::to_string(sum) + ")");
  }
}

CountVector::CountVector(Eigen::VectorXi counts_in, int total_in)
    : counts(std::move(counts_in)), total(total_in) {
  if (total < 0) {
    throw std::invalid_argument("CountVector: total must be non-negative");
  }
  long long sum = 0;
  for (Eigen::Index j = 0; j < counts.size(); ++j) {
    if (counts[j] < 0) {
      throw std::invalid_argument("CountVector: counts must be non-negative");
    }
    sum += counts[j];
  }
  if (sum != total) {
    throw std::invalid_argument("CountVector: counts must sum to total");
  }
}

double multinomial_log_pmf(const CountVector& y, const CategoryProbabilities& p) {
  if (y.size() != p.size()) {
    throw std::invalid_argument("multinomial_log_pmf: dimension mismatch");
  }
  double log_value = std::lgamma(static_cast<double>(y.total) + 1.0);
  for (int j = 0; j < y.size(); ++j) {
    const int yj = y.counts[j];
    log_value -= std::lgamma(static_cast<double>(yj) + 1.0);
    if (yj > 0) {
      if (p[j] == 0.0) return -std::numeric_limits<double>::infinity();
      log_value += yj * std::log(p[j]);
    }
  }
  return log_value;
}

double multinomial_pmf(const CountVector& y, const CategoryProbabilities& p) {
  const double lp = multinomial_log_pmf(y, p);
  return std::isinf(lp) ? 0.0 : std::exp(lp);
}

MultinomialMoments multinomial_moments(int total, const CategoryProbabilities& p) {
  if (total <= 0) {
    throw std::invalid_argument("multinomial_moments: total must be positive");
  }
  MultinomialMoments out;
  out.mean = total * p.probs();
  out.covariance =
      total * (Eigen::MatrixXd(p.probs().asDiagonal()) -
               p.probs() * p.probs().transpose());
  return out;
}

CountVector multinomial_sample(int total, const CategoryProbabilities& p, Rng& rng) {
  const int J = p.size();
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(J);
  if (total > 0) {
    // Suffix sums keep the conditional probability exactly 1 when all the
    // remaining mass sits in the current category.
    Eigen::VectorXd suffix(J);
    suffix[J - 1] = p[J - 1];
    for (int j = J - 2; j >= 0; --j) suffix[j] = p[j] + suffix[j + 1];

    int remaining = total;
    for (int j = 0; j + 1 < J && remaining > 0; ++j) {
      double q = suffix[j] > 0.0 ? p[j] / suffix[j] : 1.0;
      if (q > 1.0) q = 1.0;
      const int k = rng.binomial(remaining, q);
      counts[j] = k;
      remaining -= k;
    }
    counts[J - 1] += remaining;
  }
  return CountVector(std::move(counts), total);
}

CategoryProbabilities softmax_probs(const Eigen::VectorXd& eta, int reference_position) {
  const int J = static_cast<int>(eta.size()) + 1;
  if (J < 2) {
    throw std::invalid_argument("softmax_probs: eta must be non-empty");
  }
  if (reference_position < 0 || reference_position >= J) {
    throw std::invalid_argument("softmax_probs: reference position out of range");
  }
  Eigen::VectorXd logits(J);
  int k = 0;
  for (int j = 0; j < J; ++j) {
    if (j == reference_position) {
      logits[j] = 0.0;
    } else {
      if (!std::isfinite(eta[k])) {
        throw std::invalid_argument("softmax_probs: eta must be finite");
      }
      logits[j] = eta[k++];
    }
  }
  const double shift = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - shift).exp();
  return CategoryProbabilities(e / e.sum());
}

}  // namespace polydisp
