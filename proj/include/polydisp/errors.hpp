#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace polydisp {

// Input data failed a structural check (bad counts, inconsistent group
// sizes, malformed files, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The fixed-effect design has linearly dependent columns.
class RankDeficiencyError : public std::runtime_error {
 public:
  RankDeficiencyError(const std::string& msg, std::vector<std::string> aliased)
      : std::runtime_error(msg), aliased_(std::move(aliased)) {}

  const std::vector<std::string>& aliased_columns() const { return aliased_; }

 private:
  std::vector<std::string> aliased_;
};

// A category carries no information (zero total count, or vanishing
// model-expected variance at some (category, time) cell).
class DegenerateCategoryError : public std::runtime_error {
 public:
  DegenerateCategoryError(const std::string& msg, int category, int time)
      : std::runtime_error(msg), category_(category), time_(time) {}

  int category() const { return category_; }
  int time() const { return time_; }

 private:
  int category_;
  int time_;
};

// An operation that requires a converged fit received an unconverged one.
class UnconvergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical optimization produced an inconsistent result (e.g. a nested
// model with a better deviance than the full model beyond tolerance).
class OptimizerFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sample violates a statistical precondition (constant sample, ...).
class DegenerateSampleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace polydisp
