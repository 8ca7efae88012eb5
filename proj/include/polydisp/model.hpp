#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polydisp/dataset.hpp"

namespace polydisp {

// One fixed-effect term. Every term expands to one or more design columns,
// and every column receives a separate coefficient per non-reference logit.
struct Term {
  enum class Kind { Continuous, Factor, Interaction };

  Kind kind = Kind::Continuous;
  std::string name;
  std::string name2;  // second covariate, Interaction only

  static Term continuous(std::string name) {
    return Term{Kind::Continuous, std::move(name), {}};
  }
  static Term factor(std::string name) {
    return Term{Kind::Factor, std::move(name), {}};
  }
  static Term interaction(std::string a, std::string b) {
    return Term{Kind::Interaction, std::move(a), std::move(b)};
  }
};

// Model specification: reference category, fixed-effect terms (an intercept
// per logit is always present), and a per-unit random intercept shared
// across logits and times.
struct ModelSpec {
  int reference_category = 0;  // 0-based index
  std::vector<Term> terms;
  bool random_intercept = true;
  // When set, the variance component is held at this value instead of being
  // updated from the random-effect predictions.
  std::optional<double> fixed_sigma2;
};

struct FitOptions {
  double objective_rel_tol = 1e-8;
  double gradient_tol = 1e-6;
  int max_outer_iterations = 200;
  int max_newton_iterations = 50;
  int max_step_halvings = 30;
  double hessian_ridge = 1e-8;
  double sigma2_floor = 1e-10;
};

struct FitResult {
  // Fixed effects in logit-major order: all design columns for the first
  // non-reference category, then the next, ...
  Eigen::VectorXd beta;
  Eigen::VectorXd se_beta;
  Eigen::VectorXd u;         // predicted random intercepts, one per unit
  double sigma2 = 0.0;       // variance component at convergence
  double loglik = 0.0;       // l1 at the optimum (multinomial coefficient omitted)
  double penalized_loglik = 0.0;  // l1 + l2
  double deviance = 0.0;          // -2 * loglik
  std::vector<double> fitted;     // (i, j, t), all J categories
  bool converged = false;
  int iterations = 0;  // outer iterations used
  std::string message;

  std::vector<std::string> parameter_names;  // aligned with beta
  std::vector<std::string> column_names;     // design columns (shared across logits)

  int n_units = 0;
  int n_categories = 0;
  int n_times = 0;
  int group_size = 0;
  int reference_category = 0;

  // Retained for nesting checks between fits on the same data.
  Eigen::MatrixXd design;  // (n_units * n_times) x P, row = i * n_times + t
  std::uint64_t data_fingerprint = 0;

  double fitted_prob(int i, int j, int t) const {
    return fitted[(static_cast<std::size_t>(i) * n_categories + j) * n_times + t];
  }
  int n_parameters() const { return static_cast<int>(beta.size()); }
};

struct DesignMatrix {
  Eigen::MatrixXd X;  // (n_units * n_times) x P, row = i * n_times + t
  std::vector<std::string> column_names;
};

// Expands intercept + terms into the per-(unit, time) design matrix. Factors
// use treatment coding against their first level; interactions expand to the
// products of the parent columns.
DesignMatrix expand_design(const ModelSpec& spec,
                           const GroupedLongitudinalDataset& data);

// Linear predictors eta_ijt = x_it' beta_j + u_i for the non-reference
// logits. Row r = i * n_times + t; column q runs over non-reference
// categories in ascending category order.
Eigen::MatrixXd linear_predictor(const ModelSpec& spec,
                                 const Eigen::VectorXd& beta,
                                 const Eigen::VectorXd& u,
                                 const GroupedLongitudinalDataset& data);

// l1 + l2: grouped-count multinomial log-likelihood (multinomial coefficient
// omitted) plus the Gaussian log-density of the random intercepts.
double penalized_loglik(const ModelSpec& spec, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& u, double sigma2,
                        const GroupedLongitudinalDataset& data);

// Analytic gradient of penalized_loglik, beta entries first, then u.
Eigen::VectorXd penalized_gradient(const ModelSpec& spec,
                                   const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& u, double sigma2,
                                   const GroupedLongitudinalDataset& data);

// Maximizes l1 + l2 jointly over (beta, u) by safeguarded Newton steps at a
// fixed sigma2, alternating with sigma2 <- u'u / n updates, to joint
// convergence. Non-convergence is reported through the result flag; rank
// deficiency and degenerate categories raise errors.
FitResult fit(const ModelSpec& spec, const GroupedLongitudinalDataset& data,
              const FitOptions& options = {});

// -2 * loglik of a converged fit.
double deviance_of(const FitResult& result);

}  // namespace polydisp
