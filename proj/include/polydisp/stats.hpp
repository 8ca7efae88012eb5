#pragma once

#include <vector>

#include "polydisp/model.hpp"

namespace polydisp {

// Upper-tail probability of the chi-square distribution via the regularized
// incomplete gamma function. Absolute error below 1e-10 for df <= 200.
double chisq_sf(double x, int df);

double normal_cdf(double z);

// Inverse standard normal CDF (Wichura's PPND16 rational approximations).
double normal_quantile(double p);

struct LrTestResult {
  double deviance_diff = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// Likelihood-ratio (deviance) test of a nested fixed-effect structure
// against a fuller one on the same data. Nesting is verified by checking
// column-space containment of the design matrices.
LrTestResult lr_test(const FitResult& nested, const FitResult& full);

// True when every column of `nested` lies in the column space of `full`.
bool column_space_contained(const Eigen::MatrixXd& nested,
                            const Eigen::MatrixXd& full);

struct ShapiroWilkResult {
  double W = 0.0;
  double p_value = 0.0;
};

// Shapiro-Wilk normality test, Royston's approximation (valid for sample
// sizes 3..5000).
ShapiroWilkResult shapiro_wilk(const std::vector<double>& samples);

}  // namespace polydisp
