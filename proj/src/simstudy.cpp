#include "polydisp/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "polydisp/errors.hpp"
#include "polydisp/stats.hpp"

namespace polydisp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate_config(const ScenarioConfig& cfg) {
  if (cfg.n_units < 1 || cfg.group_size < 1 || cfg.n_times < 1 ||
      cfg.n_categories < 2) {
    throw std::invalid_argument("scenario: bad dimensions");
  }
  if (cfg.sigma2 < 0.0) {
    throw std::invalid_argument("scenario: sigma2 must be non-negative");
  }
  if (static_cast<int>(cfg.theta.size()) != 2 * (cfg.n_categories - 1)) {
    throw std::invalid_argument(
        "scenario: theta must hold an intercept and a slope per "
        "non-reference logit");
  }
  if (cfg.replicates < 1) {
    throw std::invalid_argument("scenario: replicates must be >= 1");
  }
}

}  // namespace

std::vector<double> default_theta(int n_categories) {
  switch (n_categories) {
    case 3:
      return {1.0, 0.5, 0.5, 1.0};
    case 4:
      return {1.0, 0.5, 1.5, 0.5, 1.0, -1.0};
    case 5:
      return {1.0, 0.5, 1.5, 1.0, 0.5, 1.0, -1.0, -0.7};
    default:
      throw std::invalid_argument(
          "default_theta: defined for 3, 4 or 5 categories");
  }
}

std::vector<ScenarioConfig> default_grid(std::uint64_t master_seed,
                                         int replicates) {
  const int n_values[] = {100, 200, 500};
  const int j_values[] = {3, 4, 5};
  const int m_values[] = {5, 10, 15};
  const int t_values[] = {3, 4};
  const double sigma2_values[] = {0.01, 10.0};

  std::vector<ScenarioConfig> grid;
  std::uint64_t index = 0;
  for (int N : n_values) {
    for (int J : j_values) {
      for (int m : m_values) {
        for (int T : t_values) {
          for (double s2 : sigma2_values) {
            ScenarioConfig cfg;
            cfg.n_units = N;
            cfg.n_categories = J;
            cfg.group_size = m;
            cfg.n_times = T;
            cfg.sigma2 = s2;
            cfg.theta = default_theta(J);
            cfg.replicates = replicates;
            cfg.seed = split_seed(master_seed, index++);
            grid.push_back(std::move(cfg));
          }
        }
      }
    }
  }
  return grid;
}

CategoryProbabilities scenario_probabilities(const std::vector<double>& theta,
                                             int n_categories, double x,
                                             const Eigen::VectorXd& u_logits) {
  const int Q = n_categories - 1;
  if (static_cast<int>(theta.size()) != 2 * Q) {
    throw std::invalid_argument("scenario_probabilities: theta length mismatch");
  }
  if (u_logits.size() != Q) {
    throw std::invalid_argument("scenario_probabilities: one random intercept per logit");
  }
  Eigen::VectorXd eta(Q);
  for (int q = 0; q < Q; ++q) eta[q] = theta[q] + theta[Q + q] * x + u_logits[q];
  return softmax_probs(eta, 0);
}

GroupedLongitudinalDataset simulate_dataset(const ScenarioConfig& cfg, Rng& rng) {
  validate_config(cfg);
  const int N = cfg.n_units, J = cfg.n_categories, T = cfg.n_times;
  const int m = cfg.group_size;
  const int Q = J - 1;

  // Random intercepts first: one per (unit, logit), shared across times.
  // The random-effect covariance is category-indexed, so each non-reference
  // logit carries its own intercept draw.
  const double sd = std::sqrt(cfg.sigma2);
  Eigen::MatrixXd u(N, Q);
  for (int i = 0; i < N; ++i) {
    for (int q = 0; q < Q; ++q) u(i, q) = rng.normal(0.0, sd);
  }

  std::vector<double> x(static_cast<std::size_t>(N) * T);
  std::vector<int> counts(static_cast<std::size_t>(N) * J * T, 0);
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      const double x_it = rng.normal();
      x[static_cast<std::size_t>(i) * T + t] = x_it;
      const CategoryProbabilities pi =
          scenario_probabilities(cfg.theta, J, x_it, u.row(i).transpose());
      const CountVector y = multinomial_sample(m, pi, rng);
      for (int j = 0; j < J; ++j) {
        counts[(static_cast<std::size_t>(i) * J + j) * T + t] = y.counts[j];
      }
    }
  }

  GroupedLongitudinalDataset data(N, m, T, J, std::move(counts));
  NumericCovariate cov;
  cov.name = "x";
  cov.value = std::move(x);
  data.numeric_covariates.push_back(std::move(cov));
  for (int j = 0; j < J; ++j) data.category_labels.push_back("c" + std::to_string(j + 1));
  return data;
}

ModelSpec study_model_spec() {
  ModelSpec spec;
  spec.reference_category = 0;
  spec.terms = {Term::continuous("x")};
  spec.random_intercept = true;
  return spec;
}

double sample_quantile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw std::invalid_argument("sample_quantile: empty sample");
  }
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

StudySummary summarize(const std::vector<double>& samples) {
  StudySummary s;
  if (samples.empty()) {
    s.maximum = s.minimum = s.amplitude = s.mean = s.sd = kNaN;
    s.shapiro_W = s.shapiro_p = s.p2_5 = s.p97_5 = kNaN;
    return s;
  }
  const int n = static_cast<int>(samples.size());
  s.maximum = *std::max_element(samples.begin(), samples.end());
  s.minimum = *std::min_element(samples.begin(), samples.end());
  s.amplitude = s.maximum - s.minimum;
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  s.mean = mean;
  if (n >= 2) {
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    s.sd = std::sqrt(ss / (n - 1));
  } else {
    s.sd = kNaN;
  }
  if (n >= 3 && n <= 5000 && s.amplitude > 0.0) {
    const ShapiroWilkResult sw = shapiro_wilk(samples);
    s.shapiro_W = sw.W;
    s.shapiro_p = sw.p_value;
  } else {
    s.shapiro_W = s.shapiro_p = kNaN;
  }
  s.p2_5 = sample_quantile(samples, 0.025);
  s.p97_5 = sample_quantile(samples, 0.975);
  return s;
}

std::vector<CellResult> run_study(const std::vector<ScenarioConfig>& cfgs,
                                  const StudyOptions& options) {
  for (const auto& cfg : cfgs) validate_config(cfg);

  struct WorkItem {
    int cell;
    int replicate;
  };
  std::vector<WorkItem> items;
  std::vector<std::vector<double>> slots(cfgs.size());
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    slots[c].assign(cfgs[c].replicates, kNaN);
    for (int r = 0; r < cfgs[c].replicates; ++r) {
      items.push_back({static_cast<int>(c), r});
    }
  }

  const ModelSpec spec = study_model_spec();
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= items.size()) return;
      const WorkItem item = items[k];
      const ScenarioConfig& cfg = cfgs[item.cell];
      Rng rng(split_seed(cfg.seed, static_cast<std::uint64_t>(item.replicate)));
      try {
        const GroupedLongitudinalDataset data = simulate_dataset(cfg, rng);
        const FitResult res = fit(spec, data, options.fit);
        if (!res.converged) continue;  // slot stays NaN -> excluded
        const DispersionReport report = dispersion_index(data, res);
        slots[item.cell][item.replicate] = report.lambda_longitudinal;
      } catch (const DegenerateCategoryError&) {
        // excluded
      } catch (const RankDeficiencyError&) {
        // excluded
      }
    }
  };

  int workers = options.workers;
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;
  }
  workers = std::min<int>(workers, static_cast<int>(items.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<CellResult> out(cfgs.size());
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    CellResult& cell = out[c];
    cell.config = cfgs[c];
    for (double v : slots[c]) {
      if (std::isnan(v)) {
        ++cell.excluded;
      } else {
        cell.lambdas.push_back(v);
      }
    }
    cell.unreliable = cell.excluded * 10 > cfgs[c].replicates;
    cell.summary = summarize(cell.lambdas);
  }
  return out;
}

std::vector<PercentileCurvePoint> percentile_curve(
    const ScenarioConfig& cfg_template, const std::vector<int>& m_values,
    double sigma2_equi, double sigma2_over, const StudyOptions& options) {
  if (m_values.empty()) {
    throw std::invalid_argument("percentile_curve: m_values must be non-empty");
  }
  std::vector<int> ms(m_values);
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());

  std::vector<ScenarioConfig> cfgs;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    for (int regime = 0; regime < 2; ++regime) {
      ScenarioConfig cfg = cfg_template;
      cfg.group_size = ms[k];
      cfg.sigma2 = regime == 0 ? sigma2_equi : sigma2_over;
      cfg.seed = split_seed(cfg_template.seed, 2 * k + regime);
      cfgs.push_back(std::move(cfg));
    }
  }
  const std::vector<CellResult> cells = run_study(cfgs, options);

  std::vector<PercentileCurvePoint> out;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    PercentileCurvePoint pt;
    pt.m = ms[k];
    const CellResult& equi = cells[2 * k];
    const CellResult& over = cells[2 * k + 1];
    pt.equi_mean = equi.summary.mean;
    pt.equi_p2_5 = equi.summary.p2_5;
    pt.equi_p97_5 = equi.summary.p97_5;
    pt.equi_excluded = equi.excluded;
    pt.over_mean = over.summary.mean;
    pt.over_p2_5 = over.summary.p2_5;
    pt.over_p97_5 = over.summary.p97_5;
    pt.over_excluded = over.excluded;
    out.push_back(pt);
  }
  return out;
}

Histogram histogram_bins(const std::vector<double>& samples, int bin_count) {
  if (samples.empty()) {
    throw std::invalid_argument("histogram_bins: empty sample");
  }
  if (bin_count < 1) {
    throw std::invalid_argument("histogram_bins: need at least one bin");
  }
  const double lo = *std::min_element(samples.begin(), samples.end());
  const double hi = *std::max_element(samples.begin(), samples.end());
  const double width = (hi - lo) / bin_count;

  Histogram h;
  h.edges.resize(bin_count + 1);
  for (int b = 0; b <= bin_count; ++b) h.edges[b] = lo + b * width;
  h.edges[bin_count] = hi;
  h.counts.assign(bin_count, 0);
  for (double v : samples) {
    int idx = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
    idx = std::clamp(idx, 0, bin_count - 1);
    ++h.counts[idx];
  }
  return h;
}

}  // namespace polydisp
