// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with the measured values.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "polydisp/io.hpp"

using namespace polydisp;
namespace fs = std::filesystem;

namespace {

void report(int criterion, bool ok, const std::string& details) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion,
              details.c_str());
  std::fflush(stdout);
}

ScenarioConfig table_cell(int N, int J, int m, int T, double sigma2,
                          std::uint64_t seed, int replicates = 200) {
  ScenarioConfig cfg;
  cfg.n_units = N;
  cfg.n_categories = J;
  cfg.group_size = m;
  cfg.n_times = T;
  cfg.sigma2 = sigma2;
  cfg.theta = default_theta(J);
  cfg.replicates = replicates;
  cfg.seed = seed;
  return cfg;
}

StudyOptions acceptance_options() {
  StudyOptions options;
  options.workers = 0;  // all cores
  return options;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

constexpr std::uint64_t kSeed = 20240901;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POLYDISP_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text) {
    if (c == '\n') ++lines;
  }
  return lines;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  return out;
}

}  // namespace

TEST_CASE("criterion 1: reference-table cell reproduction at 200 replicates") {
  const auto cells = run_study(
      {table_cell(100, 3, 5, 3, 0.01, split_seed(kSeed, 1)),
       table_cell(100, 3, 5, 3, 10.0, split_seed(kSeed, 2))},
      acceptance_options());
  const StudySummary& equi = cells[0].summary;
  const StudySummary& over = cells[1].summary;

  const bool equi_mean_ok = std::abs(equi.mean - 0.328) <= 0.03;
  const bool equi_sd_ok = std::abs(equi.sd - 0.016) <= 0.01;
  const bool over_mean_ok = std::abs(over.mean - 0.668) <= 0.04;
  const bool over_sd_ok = std::abs(over.sd - 0.017) <= 0.01;
  const bool ok = equi_mean_ok && equi_sd_ok && over_mean_ok && over_sd_ok;
  report(1, ok,
         "equi mean " + fmt(equi.mean) + " (target 0.328 +/- 0.03), sd " +
             fmt(equi.sd) + " (target 0.016 +/- 0.01); over mean " +
             fmt(over.mean) + " (target 0.668 +/- 0.04), sd " + fmt(over.sd) +
             " (target 0.017 +/- 0.01)");
  CHECK(equi_mean_ok);
  CHECK(equi_sd_ok);
  CHECK(over_mean_ok);
  CHECK(over_sd_ok);
}

TEST_CASE("criterion 2: overdispersed-to-equidispersed ratio across m=5 cells") {
  std::vector<ScenarioConfig> cfgs;
  std::uint64_t k = 100;
  for (int N : {100, 200, 500}) {
    for (int J : {3, 4, 5}) {
      for (int T : {3, 4}) {
        cfgs.push_back(table_cell(N, J, 5, T, 0.01, split_seed(kSeed, k++)));
        cfgs.push_back(table_cell(N, J, 5, T, 10.0, split_seed(kSeed, k++)));
      }
    }
  }
  const auto cells = run_study(cfgs, acceptance_options());
  bool all_ok = true;
  double lo = 1e9, hi = -1e9;
  std::string failures;
  for (std::size_t c = 0; c < cells.size(); c += 2) {
    const double ratio = cells[c + 1].summary.mean / cells[c].summary.mean;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
    const bool ok = ratio >= 1.7 && ratio <= 2.3;
    if (!ok) {
      all_ok = false;
      const auto& cfg = cells[c].config;
      failures += " [N=" + std::to_string(cfg.n_units) +
                  ",J=" + std::to_string(cfg.n_categories) +
                  ",T=" + std::to_string(cfg.n_times) + ": " + fmt(ratio) + "]";
    }
    CHECK(ok);
  }
  report(2, all_ok,
         "18 cells, ratio range [" + fmt(lo) + ", " + fmt(hi) +
             "], target [1.7, 2.3]" +
             (failures.empty() ? "" : "; out of range:" + failures));
}

TEST_CASE("criterion 3: equidispersed means decrease in m") {
  const auto cells = run_study(
      {table_cell(100, 3, 5, 3, 0.01, split_seed(kSeed, 31)),
       table_cell(100, 3, 10, 3, 0.01, split_seed(kSeed, 32)),
       table_cell(100, 3, 15, 3, 0.01, split_seed(kSeed, 33))},
      acceptance_options());
  const double m5 = cells[0].summary.mean;
  const double m10 = cells[1].summary.mean;
  const double m15 = cells[2].summary.mean;
  const bool decreasing = m5 > m10 && m10 > m15;
  const bool bands = std::abs(m5 - 0.328) <= 0.03 &&
                     std::abs(m10 - 0.243) <= 0.03 &&
                     std::abs(m15 - 0.215) <= 0.03;
  report(3, decreasing && bands,
         "means " + fmt(m5) + ", " + fmt(m10) + ", " + fmt(m15) +
             " (targets 0.328, 0.243, 0.215 +/- 0.03), strictly decreasing: " +
             (decreasing ? "yes" : "no"));
  CHECK(decreasing);
  CHECK(bands);
}

TEST_CASE("criterion 4: group-size separation of the dispersion regimes") {
  ScenarioConfig tpl = table_cell(100, 3, 5, 10, 0.01, split_seed(kSeed, 4));
  const auto points =
      percentile_curve(tpl, {1, 2, 5}, 0.01, 10.0, acceptance_options());
  REQUIRE(points.size() == 3);
  const bool m1_overlap = points[0].equi_p97_5 >= points[0].over_p2_5;
  const bool m2_separated = points[1].equi_p97_5 < points[1].over_p2_5;
  const bool m5_separated = points[2].equi_p97_5 < points[2].over_p2_5;
  report(4, m1_overlap && m2_separated && m5_separated,
         "m=1 bands " + std::string(m1_overlap ? "overlap" : "do not overlap") +
             " (equi p97.5 " + fmt(points[0].equi_p97_5) + " vs over p2.5 " +
             fmt(points[0].over_p2_5) + "); m=2 separated: " +
             (m2_separated ? "yes" : "no") + " (" + fmt(points[1].equi_p97_5) +
             " < " + fmt(points[1].over_p2_5) + "); m=5 separated: " +
             (m5_separated ? "yes" : "no"));
  CHECK(m1_overlap);
  CHECK(m2_separated);
  CHECK(m5_separated);
}

TEST_CASE("criterion 5: analytic gradient matches finite differences") {
  ScenarioConfig cfg = table_cell(8, 3, 4, 2, 0.5, 505, 1);
  cfg.theta = {0.3, -0.2, 0.4, 0.8};
  Rng rng(cfg.seed);
  const GroupedLongitudinalDataset data = simulate_dataset(cfg, rng);
  ModelSpec spec = study_model_spec();
  const int n_beta = 4, n_units = 8;
  const double sigma2 = 0.8;

  Rng point_rng(606);
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    Eigen::VectorXd x(n_beta + n_units);
    for (int i = 0; i < x.size(); ++i) x[i] = point_rng.normal(0.0, 0.5);
    auto f = [&](const Eigen::VectorXd& v) {
      return penalized_loglik(spec, v.head(n_beta), v.tail(n_units), sigma2, data);
    };
    const Eigen::VectorXd analytic =
        penalized_gradient(spec, x.head(n_beta), x.tail(n_units), sigma2, data);
    const Eigen::VectorXd numeric = oracles::fd_gradient(f, x, 1e-5);
    for (int i = 0; i < x.size(); ++i) {
      const double rel =
          std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
      worst = std::max(worst, rel);
    }
  }
  const bool ok = worst < 1e-5;
  std::ostringstream os;
  os << "worst relative error " << worst << " over 20 random points (target < 1e-5)";
  report(5, ok, os.str());
  CHECK(ok);
}

TEST_CASE("criterion 6: closed-form recovery of pooled log-odds") {
  // 500 units, one time, counts (5, 3, 2) each: pooled proportions
  // (0.5, 0.3, 0.2).
  const int n = 500;
  std::vector<int> counts(static_cast<std::size_t>(n) * 3);
  for (int i = 0; i < n; ++i) {
    counts[static_cast<std::size_t>(i) * 3 + 0] = 5;
    counts[static_cast<std::size_t>(i) * 3 + 1] = 3;
    counts[static_cast<std::size_t>(i) * 3 + 2] = 2;
  }
  const GroupedLongitudinalDataset data(n, 10, 1, 3, std::move(counts));
  ModelSpec spec;
  spec.reference_category = 0;
  spec.fixed_sigma2 = 1e-8;
  const FitResult res = fit(spec, data);
  const double e2 = std::abs(res.beta[0] - std::log(0.3 / 0.5));
  const double e3 = std::abs(res.beta[1] - std::log(0.2 / 0.5));
  const bool ok = res.converged && e2 < 1e-4 && e3 < 1e-4;
  std::ostringstream os;
  os << "intercept errors " << e2 << ", " << e3 << " (target < 1e-4)";
  report(6, ok, os.str());
  CHECK(ok);
}

TEST_CASE("criterion 7: chi-square tail values for the deviance table") {
  const double a = chisq_sf(12.51, 8);
  const double b = chisq_sf(9.08, 6);
  const double c = chisq_sf(12.78, 8);
  const bool ok = a >= 0.115 && a <= 0.14 && b >= 0.15 && b <= 0.18 &&
                  c >= 0.105 && c <= 0.13;
  report(7, ok,
         "sf(12.51,8)=" + fmt(a) + " in [0.115,0.14]; sf(9.08,6)=" + fmt(b) +
             " in [0.15,0.18]; sf(12.78,8)=" + fmt(c) + " in [0.105,0.13]");
  CHECK(ok);
}

TEST_CASE("criterion 8: sampler goodness of fit") {
  Eigen::VectorXd p(3);
  p << 0.2, 0.3, 0.5;
  const CategoryProbabilities pi{p};
  Rng rng(split_seed(kSeed, 8));
  const int draws = 100000, m = 5;
  long long totals[3] = {0, 0, 0};
  bool sums_ok = true;
  for (int k = 0; k < draws; ++k) {
    const CountVector y = multinomial_sample(m, pi, rng);
    if (y.counts.sum() != m) sums_ok = false;
    for (int j = 0; j < 3; ++j) totals[j] += y.counts[j];
  }
  double chi2 = 0.0;
  const double trials = static_cast<double>(draws) * m;
  for (int j = 0; j < 3; ++j) {
    const double expected = trials * pi[j];
    chi2 += (totals[j] - expected) * (totals[j] - expected) / expected;
  }
  const double crit = 9.21034;  // chi-square(2), upper 1%
  const bool ok = sums_ok && chi2 < crit;
  report(8, ok,
         "all draws sum to m: " + std::string(sums_ok ? "yes" : "no") +
             "; Pearson chi2 " + fmt(chi2) + " < " + fmt(crit) + " (1% level)");
  CHECK(ok);
}

TEST_CASE("criterion 9: Shapiro-Wilk level and affine invariance") {
  Rng rng(split_seed(kSeed, 9));
  int rejections = 0;
  const int trials = 1000;
  std::vector<double> x(1000);
  for (int t = 0; t < trials; ++t) {
    for (double& v : x) v = rng.normal();
    if (shapiro_wilk(x).p_value < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / trials;
  const bool level_ok = rate >= 0.03 && rate <= 0.07;

  std::vector<double> y(x);
  for (double& v : y) v = -3.25 * v + 17.0;
  const double dw = std::abs(shapiro_wilk(y).W - shapiro_wilk(x).W);
  const bool affine_ok = dw <= 1e-10;
  report(9, level_ok && affine_ok,
         "rejection rate " + fmt(rate) + " in [0.03, 0.07]; |delta W| = " +
             std::to_string(dw) + " <= 1e-10");
  CHECK(level_ok);
  CHECK(affine_ok);
}

TEST_CASE("criterion 10: select pipeline on the bundled fixture") {
  const fs::path src(POLYDISP_SOURCE_DIR);
  const fs::path out = fs::temp_directory_path() / "polydisp_acceptance_select";
  fs::remove_all(out);
  fs::create_directories(out);

  const int code = run_cli(
      "select --config " + (src / "configs" / "case_study_select.json").string() +
      " --data " + (src / "data" / "case_study_synthetic.csv").string() +
      " --out " + out.string());
  REQUIRE(code == 0);

  const std::string table = read_text_file((out / "deviance_table.csv").string());
  const auto table_lines = count_lines(table);
  std::istringstream ts(table);
  std::string header, row1, row2;
  std::getline(ts, header);
  std::getline(ts, row1);
  std::getline(ts, row2);
  const bool five_models = table_lines == 6;
  const bool six_columns = split(header, ',').size() == 6;
  const bool first_blank = split(row1 + "#", ',')[2].empty();
  const bool later_filled = !split(row2, ',')[2].empty();

  const std::string estimates = read_text_file((out / "estimates.csv").string());
  const bool two_intercepts = count_lines(estimates) == 3;
  bool se_positive = true;
  {
    std::istringstream es(estimates);
    std::string line;
    std::getline(es, line);
    while (std::getline(es, line)) {
      const auto fields = split(line, ',');
      if (fields.size() != 3 || std::strtod(fields[2].c_str(), nullptr) <= 0.0) {
        se_positive = false;
      }
    }
  }

  const std::string variances = read_text_file((out / "variance_table.csv").string());
  const bool five_days = count_lines(variances) == 6;
  const bool obs_exp_cols = split(variances.substr(0, variances.find('\n')), ',').size() == 7;

  const std::string index_report = read_text_file((out / "index_report.txt").string());
  const auto pos = index_report.find("lambda_longitudinal = ");
  REQUIRE(pos != std::string::npos);
  const double lambda = std::strtod(index_report.c_str() + pos + 22, nullptr);
  const bool lambda_ok = lambda > 0.0 && lambda < 0.15;

  const bool ok = five_models && six_columns && first_blank && later_filled &&
                  two_intercepts && se_positive && five_days && obs_exp_cols &&
                  lambda_ok;
  report(10, ok,
         "five-model table: " + std::string(five_models ? "yes" : "no") +
             "; two-intercept estimates: " + (two_intercepts ? "yes" : "no") +
             "; per-day variance table: " + (five_days ? "yes" : "no") +
             "; lambda_longitudinal = " + fmt(lambda) + " (target < 0.15)");
  CHECK(five_models);
  CHECK(six_columns);
  CHECK(first_blank);
  CHECK(later_filled);
  CHECK(two_intercepts);
  CHECK(se_positive);
  CHECK(five_days);
  CHECK(obs_exp_cols);
  CHECK(lambda_ok);
}

TEST_CASE("criterion 11: study output is byte-identical across worker counts") {
  const fs::path base = fs::temp_directory_path() / "polydisp_acceptance_det";
  fs::remove_all(base);
  fs::create_directories(base);
  const std::string cfg =
      "{\"seed\": 314, \"replicates\": 30, \"scenarios\": ["
      "{\"n_units\": 50, \"n_categories\": 3, \"group_size\": 5,"
      " \"n_times\": 2, \"sigma2\": 0.01},"
      "{\"n_units\": 50, \"n_categories\": 3, \"group_size\": 5,"
      " \"n_times\": 2, \"sigma2\": 10}]}";
  write_text_file((base / "study.json").string(), cfg);

  const int code1 = run_cli("study --config " + (base / "study.json").string() +
                            " --workers 1 --out " + (base / "w1").string());
  const int code2 = run_cli("study --config " + (base / "study.json").string() +
                            " --workers 2 --out " + (base / "w2").string());
  REQUIRE(code1 == 0);
  REQUIRE(code2 == 0);
  const std::string a = read_text_file((base / "w1" / "study_summary.csv").string());
  const std::string b = read_text_file((base / "w2" / "study_summary.csv").string());
  const bool ok = !a.empty() && a == b;
  report(11, ok, ok ? "summary CSVs are byte-identical for 1 and 2 workers"
                    : "summary CSVs differ between worker counts");
  CHECK(ok);
}
