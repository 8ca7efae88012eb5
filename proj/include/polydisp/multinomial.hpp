#pragma once

#include <Eigen/Dense>

#include "polydisp/rng.hpp"

namespace polydisp {

// Probability simplex over J >= 2 response categories.
class CategoryProbabilities {
 public:
  // Validates: entries in [0, 1], sum equal to 1 within 1e-12.
  explicit CategoryProbabilities(Eigen::VectorXd probs);

  const Eigen::VectorXd& probs() const { return probs_; }
  int size() const { return static_cast<int>(probs_.size()); }
  double operator[](int j) const { return probs_[j]; }

 private:
  Eigen::VectorXd probs_;
};

// Category counts summing exactly to the number of trials.
struct CountVector {
  Eigen::VectorXi counts;
  int total = 0;

  CountVector(Eigen::VectorXi counts_in, int total_in);
  int size() const { return static_cast<int>(counts.size()); }
};

// log P[Y = y] under Multinomial(total, p); -inf when some p_j = 0 with
// y_j > 0. Log-factorials go through lgamma so large totals cannot overflow.
double multinomial_log_pmf(const CountVector& y, const CategoryProbabilities& p);

double multinomial_pmf(const CountVector& y, const CategoryProbabilities& p);

struct MultinomialMoments {
  Eigen::VectorXd mean;        // total * p_j
  Eigen::MatrixXd covariance;  // total * (diag(p) - p p')
};

MultinomialMoments multinomial_moments(int total, const CategoryProbabilities& p);

// Sequential conditional-binomial sampling: exact, O(J) binomial draws,
// reproducible from the stream seed.
CountVector multinomial_sample(int total, const CategoryProbabilities& p, Rng& rng);

// Maps the J-1 non-reference logits (in category order) to the probability
// simplex; the reference category sits at reference_position with implicit
// logit zero. Max-shifted so |eta| up to 700 cannot overflow.
CategoryProbabilities softmax_probs(const Eigen::VectorXd& eta, int reference_position);

}  // namespace polydisp
