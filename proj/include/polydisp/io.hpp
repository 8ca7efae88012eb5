#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "polydisp/dataset.hpp"
#include "polydisp/dispersion.hpp"
#include "polydisp/model.hpp"
#include "polydisp/simstudy.hpp"
#include "polydisp/stats.hpp"

namespace polydisp {

// Declares how a long-format CSV is to be interpreted: the category order
// (which also fixes index j), covariate roles, and optionally the group size
// the file must have.
struct DatasetSchema {
  std::vector<std::string> categories;
  std::vector<std::string> numeric_covariates;
  std::vector<std::string> factor_covariates;
  std::optional<int> declared_group_size;
};

// Long format: header `unit,time,category,count[,covariate...]`. Every
// (unit, time) cell must list all categories with explicit zero counts and a
// consistent total. Units and times are canonically ordered (numeric-aware).
GroupedLongitudinalDataset read_dataset(const std::string& path,
                                        const DatasetSchema& schema);
GroupedLongitudinalDataset read_dataset_stream(std::istream& in,
                                               const DatasetSchema& schema,
                                               const std::string& origin);

std::string dataset_to_csv(const GroupedLongitudinalDataset& data);
void write_dataset(const std::string& path,
                   const GroupedLongitudinalDataset& data);

// Term expressions: a covariate name, "a:b" for an interaction, or "a*b"
// for main effects plus interaction. Kinds resolve against the schema.
std::vector<Term> parse_terms(const std::vector<std::string>& exprs,
                              const DatasetSchema& schema);

// Study outputs.
std::string study_summary_csv(const std::vector<CellResult>& cells);
std::string histogram_csv(const std::vector<CellResult>& cells, int bin_count);
std::string curve_csv(const std::vector<PercentileCurvePoint>& points);

// Fit outputs.
std::string estimates_csv(const FitResult& fit);
std::string random_effects_csv(const FitResult& fit,
                               const std::vector<std::string>& unit_labels);
std::string fit_report_text(const FitResult& fit);

// Per-time observed/expected variance table, one row per time, one column
// pair per category.
std::string variance_table_csv(const DispersionReport& report,
                               const std::vector<std::string>& category_labels,
                               const std::vector<std::string>& time_labels);

// Nested-model selection by deviance analysis.
struct CandidateModel {
  std::string label;
  std::string predictor_desc;
  ModelSpec spec;
};

struct SelectionRow {
  std::string model_label;
  std::string predictor;
  int compared_to = -1;     // row index of the baseline, -1 for none
  std::string comparison;   // "a x b", empty for the first row
  int df = 0;
  double deviance_diff = 0.0;
  double p_value = 1.0;
};

struct SelectionResult {
  std::vector<SelectionRow> rows;
  int selected = 0;  // stepwise-forward choice along the declared sequence
  std::vector<FitResult> fits;
};

// Fits every candidate on the same data; each model after the first is
// compared against the nearest preceding model whose design is nested in
// it. A candidate is adopted when it significantly improves (p < alpha) on
// the currently adopted model.
SelectionResult run_selection(const GroupedLongitudinalDataset& data,
                              const std::vector<CandidateModel>& models,
                              double alpha = 0.05,
                              const FitOptions& options = {});

std::string selection_table_csv(const SelectionResult& result);

// Small utilities shared with the CLI.
std::uint64_t fnv1a_hash(const std::string& bytes);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace polydisp
