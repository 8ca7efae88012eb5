#pragma once

#include <cstdint>
#include <vector>

#include "polydisp/dataset.hpp"
#include "polydisp/dispersion.hpp"
#include "polydisp/model.hpp"
#include "polydisp/multinomial.hpp"
#include "polydisp/rng.hpp"

namespace polydisp {

// One cell of the simulation grid: the generating model has an intercept and
// one standard-normal covariate per non-reference logit plus a random
// intercept with variance sigma2 drawn per (unit, logit) and shared across
// times.
struct ScenarioConfig {
  int n_units = 100;      // N
  int n_categories = 3;   // J
  int group_size = 5;     // m
  int n_times = 3;        // T
  double sigma2 = 0.01;
  // Generating parameters: (alpha_2..alpha_J, beta_2..beta_J); category 1 is
  // the reference.
  std::vector<double> theta;
  int replicates = 200;
  std::uint64_t seed = 0;
};

// The study's generating parameter vectors for J = 3, 4, 5.
std::vector<double> default_theta(int n_categories);

// Full factorial grid: N in {100, 200, 500} x J in {3, 4, 5} x m in
// {5, 10, 15} x T in {3, 4}, each cell paired with sigma2 = 0.01 and 10.
// Deterministic ordering; per-cell seeds derived from master_seed.
std::vector<ScenarioConfig> default_grid(std::uint64_t master_seed,
                                         int replicates);

// Category probabilities of the generating model at covariate value x with
// one random-intercept value per non-reference logit.
CategoryProbabilities scenario_probabilities(const std::vector<double>& theta,
                                             int n_categories, double x,
                                             const Eigen::VectorXd& u_logits);

// Draws one dataset: random intercepts once per (unit, logit) and shared
// across times, x_it fresh per (unit, time), counts multinomial given the
// implied probabilities. Bit-reproducible per seed.
GroupedLongitudinalDataset simulate_dataset(const ScenarioConfig& cfg, Rng& rng);

// The analysis model matching the generating process: intercept + covariate
// "x" per logit, random intercept, reference category 1.
ModelSpec study_model_spec();

// Descriptive statistics of the replicate index values. NaN marks fields
// that are not computable at the given sample size.
struct StudySummary {
  double maximum = 0.0;
  double minimum = 0.0;
  double amplitude = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double shapiro_W = 0.0;
  double shapiro_p = 0.0;
  double p2_5 = 0.0;
  double p97_5 = 0.0;
};

StudySummary summarize(const std::vector<double>& samples);

// Type-7 (linear interpolation) sample quantile of unsorted values.
double sample_quantile(std::vector<double> values, double p);

struct CellResult {
  ScenarioConfig config;
  std::vector<double> lambdas;  // converged replicates, in replicate order
  int excluded = 0;             // unconverged / degenerate replicates
  bool unreliable = false;      // more than 10% excluded
  StudySummary summary;
};

struct StudyOptions {
  FitOptions fit;
  int workers = 0;  // 0 = hardware concurrency
};

// Simulate -> fit -> index per replicate for every scenario. Replicates are
// distributed over a worker pool; each replicate owns an independent stream
// derived from (cell seed, replicate counter), so results are identical for
// any worker count.
std::vector<CellResult> run_study(const std::vector<ScenarioConfig>& cfgs,
                                  const StudyOptions& options = {});

struct PercentileCurvePoint {
  int m = 0;
  double equi_mean = 0.0, equi_p2_5 = 0.0, equi_p97_5 = 0.0;
  double over_mean = 0.0, over_p2_5 = 0.0, over_p97_5 = 0.0;
  int equi_excluded = 0, over_excluded = 0;
};

// Runs both dispersion regimes across group sizes, holding everything else
// in the template fixed. Output sorted by m.
std::vector<PercentileCurvePoint> percentile_curve(
    const ScenarioConfig& cfg_template, const std::vector<int>& m_values,
    double sigma2_equi = 0.01, double sigma2_over = 10.0,
    const StudyOptions& options = {});

struct Histogram {
  std::vector<double> edges;  // bin_count + 1 edges
  std::vector<int> counts;    // bin_count entries summing to the sample size
};

// Equal-width bins spanning [min, max] of the samples.
Histogram histogram_bins(const std::vector<double>& samples, int bin_count);

}  // namespace polydisp
