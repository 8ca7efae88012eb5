#include "polydisp/dispersion.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "polydisp/errors.hpp"

namespace polydisp {

namespace {

std::string label_or_index(const std::vector<std::string>& labels, int idx) {
  if (idx >= 0 && idx < static_cast<int>(labels.size())) return labels[idx];
  return std::to_string(idx + 1);
}

void format_value(std::ostringstream& os, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  os << buf;
}

}  // namespace

double observed_variance(const GroupedLongitudinalDataset& data, int j, int t) {
  const int n = data.n_units();
  if (n < 2) {
    throw std::invalid_argument(
        "observed_variance: need at least two units");
  }
  if (j < 0 || j >= data.n_categories() || t < 0 || t >= data.n_times()) {
    throw std::invalid_argument("observed_variance: index out of range");
  }
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += data.count(i, j, t);
  mean /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = data.count(i, j, t) - mean;
    ss += d * d;
  }
  return ss / (n - 1);
}

double expected_variance(const FitResult& fit, int j, int t, int group_size) {
  if (!fit.converged) {
    throw UnconvergedError("expected_variance: fit did not converge");
  }
  if (j < 0 || j >= fit.n_categories || t < 0 || t >= fit.n_times) {
    throw std::invalid_argument("expected_variance: index out of range");
  }
  double pibar = 0.0;
  for (int i = 0; i < fit.n_units; ++i) pibar += fit.fitted_prob(i, j, t);
  pibar /= fit.n_units;
  return group_size * pibar * (1.0 - pibar);
}

DispersionReport dispersion_index(const GroupedLongitudinalDataset& data,
                                  const FitResult& fit) {
  if (fit.data_fingerprint != data.fingerprint()) {
    throw std::invalid_argument(
        "dispersion_index: fit was not produced from this dataset");
  }
  if (!fit.converged) {
    throw UnconvergedError("dispersion_index: fit did not converge");
  }
  const int J = data.n_categories();
  const int T = data.n_times();
  const int m = data.group_size();

  DispersionReport report;
  report.group_size = m;
  report.observed_var.resize(J, T);
  report.expected_var.resize(J, T);
  report.lambda_jt.resize(J, T);
  for (int j = 0; j < J; ++j) {
    for (int t = 0; t < T; ++t) {
      const double vo = observed_variance(data, j, t);
      const double ve = expected_variance(fit, j, t, m);
      if (ve < 1e-12) {
        throw DegenerateCategoryError(
            "dispersion_index: expected variance vanishes for category '" +
                data.category_label(j) + "' at time '" + data.time_label(t) +
                "'",
            j, t);
      }
      report.observed_var(j, t) = vo;
      report.expected_var(j, t) = ve;
      report.lambda_jt(j, t) = vo / ve;
    }
  }
  report.lambda_t = report.lambda_jt.colwise().mean();
  report.lambda_m = report.lambda_t.mean();
  report.lambda_longitudinal = report.lambda_m / m;
  return report;
}

std::string DispersionReport::to_key_value() const {
  std::ostringstream os;
  os << "group_size = " << group_size << "\n";
  os << "n_categories = " << lambda_jt.rows() << "\n";
  os << "n_times = " << lambda_jt.cols() << "\n";
  for (int t = 0; t < lambda_t.size(); ++t) {
    os << "lambda_t[" << (t + 1) << "] = ";
    format_value(os, lambda_t[t]);
    os << "\n";
  }
  os << "lambda_m = ";
  format_value(os, lambda_m);
  os << "\n";
  os << "lambda_longitudinal = ";
  format_value(os, lambda_longitudinal);
  os << "\n";
  return os.str();
}

std::string DispersionReport::to_csv(
    const std::vector<std::string>& category_labels,
    const std::vector<std::string>& time_labels) const {
  std::ostringstream os;
  os << "scope,category,time,observed_var,expected_var,lambda\n";
  const int J = static_cast<int>(lambda_jt.rows());
  const int T = static_cast<int>(lambda_jt.cols());
  for (int j = 0; j < J; ++j) {
    for (int t = 0; t < T; ++t) {
      os << "cell," << label_or_index(category_labels, j) << ","
         << label_or_index(time_labels, t) << ",";
      format_value(os, observed_var(j, t));
      os << ",";
      format_value(os, expected_var(j, t));
      os << ",";
      format_value(os, lambda_jt(j, t));
      os << "\n";
    }
  }
  for (int t = 0; t < T; ++t) {
    os << "time,all," << label_or_index(time_labels, t) << ",,,";
    format_value(os, lambda_t[t]);
    os << "\n";
  }
  os << "overall,all,all,,,";
  format_value(os, lambda_m);
  os << "\n";
  os << "longitudinal,all,all,,,";
  format_value(os, lambda_longitudinal);
  os << "\n";
  return os.str();
}

}  // namespace polydisp
