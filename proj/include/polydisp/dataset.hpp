#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace polydisp {

// Covariate observed per (unit, time) cell; constant across the categories
// of a cell.
struct NumericCovariate {
  std::string name;
  std::vector<double> value;  // index i * n_times + t
};

struct FactorCovariate {
  std::string name;
  std::vector<int> level;                  // index i * n_times + t
  std::vector<std::string> level_labels;   // level 0 is the baseline
};

// Grouped longitudinal counts: n_units groups of a fixed size, classified
// into n_categories at each of n_times occasions.
class GroupedLongitudinalDataset {
 public:
  // counts is laid out (i, j, t) -> (i * n_categories + j) * n_times + t.
  // Validates non-negativity and that every (i, t) cell sums to group_size.
  GroupedLongitudinalDataset(int n_units, int group_size, int n_times,
                             int n_categories, std::vector<int> counts);

  int n_units() const { return n_units_; }
  int group_size() const { return group_size_; }
  int n_times() const { return n_times_; }
  int n_categories() const { return n_categories_; }

  int count(int i, int j, int t) const {
    return counts_[(static_cast<std::size_t>(i) * n_categories_ + j) * n_times_ + t];
  }
  const std::vector<int>& counts() const { return counts_; }

  const NumericCovariate* find_numeric(const std::string& name) const;
  const FactorCovariate* find_factor(const std::string& name) const;

  // Content hash over dimensions and counts; used to verify that a fit and
  // a dataset belong together.
  std::uint64_t fingerprint() const;

  std::vector<NumericCovariate> numeric_covariates;
  std::vector<FactorCovariate> factor_covariates;

  // Optional display labels; empty means "use 1-based indices".
  std::vector<std::string> category_labels;
  std::vector<std::string> unit_labels;
  std::vector<std::string> time_labels;

  std::string category_label(int j) const;
  std::string unit_label(int i) const;
  std::string time_label(int t) const;

 private:
  int n_units_;
  int group_size_;
  int n_times_;
  int n_categories_;
  std::vector<int> counts_;
};

}  // namespace polydisp
