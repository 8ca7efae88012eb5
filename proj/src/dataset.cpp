#include "polydisp/dataset.hpp"

#include "polydisp/errors.hpp"

namespace polydisp {

GroupedLongitudinalDataset::GroupedLongitudinalDataset(
    int n_units, int group_size, int n_times, int n_categories,
    std::vector<int> counts)
    : n_units_(n_units),
      group_size_(group_size),
      n_times_(n_times),
      n_categories_(n_categories),
      counts_(std::move(counts)) {
  if (n_units_ < 1 || group_size_ < 1 || n_times_ < 1 || n_categories_ < 2) {
    throw ValidationError("dataset: dimensions must satisfy n >= 1, m >= 1, T >= 1, J >= 2");
  }
  const std::size_t expected =
      static_cast<std::size_t>(n_units_) * n_categories_ * n_times_;
  if (counts_.size() != expected) {
    throw ValidationError("dataset: counts array has wrong length");
  }
  for (int i = 0; i < n_units_; ++i) {
    for (int t = 0; t < n_times_; ++t) {
      long long sum = 0;
      for (int j = 0; j < n_categories_; ++j) {
        const int c = count(i, j, t);
        if (c < 0) {
          throw ValidationError("dataset: negative count at unit " +
                                std::to_string(i + 1) + ", time " +
                                std::to_string(t + 1));
        }
        sum += c;
      }
      if (sum != group_size_) {
        throw ValidationError(
            "dataset: counts at unit " + std::to_string(i + 1) + ", time " +
            std::to_string(t + 1) + " sum to " + std::to_string(sum) +
            ", expected group size " + std::to_string(group_size_));
      }
    }
  }
}

const NumericCovariate* GroupedLongitudinalDataset::find_numeric(
    const std::string& name) const {
  for (const auto& c : numeric_covariates) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const FactorCovariate* GroupedLongitudinalDataset::find_factor(
    const std::string& name) const {
  for (const auto& c : factor_covariates) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::uint64_t GroupedLongitudinalDataset::fingerprint() const {
  // FNV-1a over dimensions and counts.
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(n_units_));
  mix(static_cast<std::uint64_t>(group_size_));
  mix(static_cast<std::uint64_t>(n_times_));
  mix(static_cast<std::uint64_t>(n_categories_));
  for (int c : counts_) mix(static_cast<std::uint64_t>(c));
  return h;
}

std::string GroupedLongitudinalDataset::category_label(int j) const {
  if (j >= 0 && j < static_cast<int>(category_labels.size())) {
    return category_labels[j];
  }
  return std::to_string(j + 1);
}

std::string GroupedLongitudinalDataset::unit_label(int i) const {
  if (i >= 0 && i < static_cast<int>(unit_labels.size())) {
    return unit_labels[i];
  }
  return std::to_string(i + 1);
}

std::string GroupedLongitudinalDataset::time_label(int t) const {
  if (t >= 0 && t < static_cast<int>(time_labels.size())) {
    return time_labels[t];
  }
  return std::to_string(t + 1);
}

}  // namespace polydisp
