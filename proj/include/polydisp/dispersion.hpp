#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "polydisp/dataset.hpp"
#include "polydisp/model.hpp"

namespace polydisp {

// Observed and model-expected variances per (category, time) and their
// aggregation into the longitudinal dispersion index.
struct DispersionReport {
  Eigen::MatrixXd observed_var;  // J x T
  Eigen::MatrixXd expected_var;  // J x T
  Eigen::MatrixXd lambda_jt;     // J x T ratios
  Eigen::VectorXd lambda_t;      // per-time mean over categories
  double lambda_m = 0.0;         // mean over times
  double lambda_longitudinal = 0.0;  // lambda_m / group size
  int group_size = 0;

  // Flat key = value rendering of the aggregates.
  std::string to_key_value() const;

  // One row per (category, time) plus aggregate rows. Labels default to
  // 1-based indices when not supplied.
  std::string to_csv(const std::vector<std::string>& category_labels = {},
                     const std::vector<std::string>& time_labels = {}) const;
};

// Sample variance (divisor n - 1) of the counts for category j at time t
// across units.
double observed_variance(const GroupedLongitudinalDataset& data, int j, int t);

// m * pibar_jt * (1 - pibar_jt) with pibar_jt the mean fitted probability
// over units.
double expected_variance(const FitResult& fit, int j, int t, int group_size);

// Full report; every category (including the reference) enters the
// per-time average.
DispersionReport dispersion_index(const GroupedLongitudinalDataset& data,
                                  const FitResult& fit);

}  // namespace polydisp
