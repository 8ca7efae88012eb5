#include "polydisp/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "polydisp/errors.hpp"

namespace polydisp {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

bool parse_int_strict(const std::string& s, long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtol(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

bool parse_double_strict(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

// Numeric-aware canonical ordering: if every label parses as a number, sort
// by value, otherwise lexicographically.
void canonical_sort(std::vector<std::string>& labels) {
  std::vector<double> values(labels.size());
  bool numeric = true;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (!parse_double_strict(labels[k], values[k])) {
      numeric = false;
      break;
    }
  }
  if (numeric) {
    std::vector<std::size_t> order(labels.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (values[a] != values[b]) return values[a] < values[b];
      return labels[a] < labels[b];
    });
    std::vector<std::string> sorted;
    sorted.reserve(labels.size());
    for (std::size_t k : order) sorted.push_back(labels[k]);
    labels = std::move(sorted);
  } else {
    std::sort(labels.begin(), labels.end());
  }
}

std::string fmt(double v, const char* spec = "%.10g") {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string fmt_fixed6(double v) { return fmt(v, "%.6f"); }

}  // namespace

GroupedLongitudinalDataset read_dataset_stream(std::istream& in,
                                               const DatasetSchema& schema,
                                               const std::string& origin) {
  if (schema.categories.size() < 2) {
    throw ValidationError(origin + ": schema must declare at least two categories");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(origin + ": empty file");
  }
  const std::vector<std::string> header = split_csv_line(line);
  const char* expected[] = {"unit", "time", "category", "count"};
  if (header.size() < 4) {
    throw ValidationError(origin + ": header must start with unit,time,category,count");
  }
  for (int k = 0; k < 4; ++k) {
    if (header[k] != expected[k]) {
      throw ValidationError(origin + ": header column " + std::to_string(k + 1) +
                            " must be '" + expected[k] + "', got '" + header[k] + "'");
    }
  }
  std::map<std::string, int> header_col;
  for (std::size_t k = 0; k < header.size(); ++k) header_col[header[k]] = static_cast<int>(k);
  for (const auto& name : schema.numeric_covariates) {
    if (!header_col.count(name)) {
      throw ValidationError(origin + ": missing covariate column '" + name + "'");
    }
  }
  for (const auto& name : schema.factor_covariates) {
    if (!header_col.count(name)) {
      throw ValidationError(origin + ": missing covariate column '" + name + "'");
    }
  }

  struct Record {
    std::string unit, time, category;
    long count;
    std::vector<std::string> covariates;  // numeric first, then factors
    int line_no;
  };
  std::vector<Record> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ValidationError(origin + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
    }
    Record rec;
    rec.unit = fields[0];
    rec.time = fields[1];
    rec.category = fields[2];
    rec.line_no = line_no;
    if (!parse_int_strict(fields[3], rec.count) || rec.count < 0) {
      throw ValidationError(origin + ":" + std::to_string(line_no) +
                            ": count must be a non-negative integer, got '" +
                            fields[3] + "'");
    }
    for (const auto& name : schema.numeric_covariates) {
      rec.covariates.push_back(fields[header_col[name]]);
    }
    for (const auto& name : schema.factor_covariates) {
      rec.covariates.push_back(fields[header_col[name]]);
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) {
    throw ValidationError(origin + ": no data rows");
  }

  // Canonical unit/time ordering.
  std::vector<std::string> units, times;
  {
    std::map<std::string, bool> useen, tseen;
    for (const auto& r : records) {
      useen[r.unit] = true;
      tseen[r.time] = true;
    }
    for (const auto& kv : useen) units.push_back(kv.first);
    for (const auto& kv : tseen) times.push_back(kv.first);
    canonical_sort(units);
    canonical_sort(times);
  }
  std::map<std::string, int> unit_idx, time_idx, cat_idx;
  for (std::size_t k = 0; k < units.size(); ++k) unit_idx[units[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < times.size(); ++k) time_idx[times[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < schema.categories.size(); ++k) {
    cat_idx[schema.categories[k]] = static_cast<int>(k);
  }

  const int n = static_cast<int>(units.size());
  const int T = static_cast<int>(times.size());
  const int J = static_cast<int>(schema.categories.size());
  std::vector<int> counts(static_cast<std::size_t>(n) * J * T, -1);
  std::vector<std::vector<std::string>> cell_covariates(
      static_cast<std::size_t>(n) * T);

  for (const auto& r : records) {
    const auto cit = cat_idx.find(r.category);
    if (cit == cat_idx.end()) {
      throw ValidationError(origin + ":" + std::to_string(r.line_no) +
                            ": category '" + r.category +
                            "' is not declared in the schema");
    }
    const int i = unit_idx[r.unit];
    const int t = time_idx[r.time];
    const int j = cit->second;
    const std::size_t slot = (static_cast<std::size_t>(i) * J + j) * T + t;
    if (counts[slot] >= 0) {
      throw ValidationError(origin + ":" + std::to_string(r.line_no) +
                            ": duplicate row for unit '" + r.unit + "', time '" +
                            r.time + "', category '" + r.category + "'");
    }
    counts[slot] = static_cast<int>(r.count);
    auto& cc = cell_covariates[static_cast<std::size_t>(i) * T + t];
    if (cc.empty()) {
      cc = r.covariates;
    } else if (cc != r.covariates) {
      throw ValidationError(origin + ":" + std::to_string(r.line_no) +
                            ": covariates differ across categories of unit '" +
                            r.unit + "', time '" + r.time + "'");
    }
  }

  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < J; ++j) {
        if (counts[(static_cast<std::size_t>(i) * J + j) * T + t] < 0) {
          throw ValidationError(origin + ": unit '" + units[i] + "', time '" +
                                times[t] + "' is missing category '" +
                                schema.categories[j] +
                                "' (zero counts must be explicit)");
        }
      }
    }
  }

  // Group size: inferred from the first cell, verified everywhere.
  int group_size = 0;
  for (int j = 0; j < J; ++j) group_size += counts[static_cast<std::size_t>(j) * T];
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      int sum = 0;
      for (int j = 0; j < J; ++j) {
        sum += counts[(static_cast<std::size_t>(i) * J + j) * T + t];
      }
      if (sum != group_size) {
        throw ValidationError(origin + ": unit '" + units[i] + "', time '" +
                              times[t] + "' has total " + std::to_string(sum) +
                              " but unit '" + units[0] + "', time '" + times[0] +
                              "' has total " + std::to_string(group_size));
      }
    }
  }
  if (schema.declared_group_size && *schema.declared_group_size != group_size) {
    throw ValidationError(origin + ": declared group size " +
                          std::to_string(*schema.declared_group_size) +
                          " does not match the observed total " +
                          std::to_string(group_size));
  }

  GroupedLongitudinalDataset data(n, group_size, T, J, std::move(counts));
  data.unit_labels = units;
  data.time_labels = times;
  data.category_labels = schema.categories;

  std::size_t cov_pos = 0;
  for (const auto& name : schema.numeric_covariates) {
    NumericCovariate cov;
    cov.name = name;
    cov.value.resize(static_cast<std::size_t>(n) * T);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        const std::string& raw =
            cell_covariates[static_cast<std::size_t>(i) * T + t][cov_pos];
        double v;
        if (!parse_double_strict(raw, v)) {
          throw ValidationError(origin + ": covariate '" + name + "' at unit '" +
                                units[i] + "', time '" + times[t] +
                                "' is not numeric: '" + raw + "'");
        }
        cov.value[static_cast<std::size_t>(i) * T + t] = v;
      }
    }
    data.numeric_covariates.push_back(std::move(cov));
    ++cov_pos;
  }
  for (const auto& name : schema.factor_covariates) {
    FactorCovariate cov;
    cov.name = name;
    std::vector<std::string> levels;
    {
      std::map<std::string, bool> seen;
      for (int i = 0; i < n; ++i) {
        for (int t = 0; t < T; ++t) {
          seen[cell_covariates[static_cast<std::size_t>(i) * T + t][cov_pos]] = true;
        }
      }
      for (const auto& kv : seen) levels.push_back(kv.first);
      canonical_sort(levels);
    }
    std::map<std::string, int> level_idx;
    for (std::size_t k = 0; k < levels.size(); ++k) level_idx[levels[k]] = static_cast<int>(k);
    cov.level_labels = levels;
    cov.level.resize(static_cast<std::size_t>(n) * T);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        cov.level[static_cast<std::size_t>(i) * T + t] =
            level_idx[cell_covariates[static_cast<std::size_t>(i) * T + t][cov_pos]];
      }
    }
    data.factor_covariates.push_back(std::move(cov));
    ++cov_pos;
  }
  return data;
}

GroupedLongitudinalDataset read_dataset(const std::string& path,
                                        const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open dataset file '" + path + "'");
  }
  return read_dataset_stream(in, schema, path);
}

std::string dataset_to_csv(const GroupedLongitudinalDataset& data) {
  std::ostringstream os;
  os << "unit,time,category,count";
  for (const auto& c : data.numeric_covariates) os << "," << c.name;
  for (const auto& c : data.factor_covariates) os << "," << c.name;
  os << "\n";
  for (int i = 0; i < data.n_units(); ++i) {
    for (int t = 0; t < data.n_times(); ++t) {
      for (int j = 0; j < data.n_categories(); ++j) {
        os << data.unit_label(i) << "," << data.time_label(t) << ","
           << data.category_label(j) << "," << data.count(i, j, t);
        for (const auto& c : data.numeric_covariates) {
          os << "," << fmt(c.value[static_cast<std::size_t>(i) * data.n_times() + t], "%.17g");
        }
        for (const auto& c : data.factor_covariates) {
          os << "," << c.level_labels[c.level[static_cast<std::size_t>(i) * data.n_times() + t]];
        }
        os << "\n";
      }
    }
  }
  return os.str();
}

void write_dataset(const std::string& path,
                   const GroupedLongitudinalDataset& data) {
  write_text_file(path, dataset_to_csv(data));
}

std::vector<Term> parse_terms(const std::vector<std::string>& exprs,
                              const DatasetSchema& schema) {
  auto kind_of = [&](const std::string& name) {
    for (const auto& c : schema.numeric_covariates) {
      if (c == name) return Term::Kind::Continuous;
    }
    for (const auto& c : schema.factor_covariates) {
      if (c == name) return Term::Kind::Factor;
    }
    throw std::invalid_argument("unknown covariate '" + name +
                                "' in model terms");
  };
  std::vector<Term> terms;
  for (const std::string& raw : exprs) {
    const std::string expr = trim(raw);
    const auto star = expr.find('*');
    const auto colon = expr.find(':');
    if (star != std::string::npos) {
      const std::string a = trim(expr.substr(0, star));
      const std::string b = trim(expr.substr(star + 1));
      terms.push_back(Term{kind_of(a), a, {}});
      terms.push_back(Term{kind_of(b), b, {}});
      terms.push_back(Term::interaction(a, b));
    } else if (colon != std::string::npos) {
      const std::string a = trim(expr.substr(0, colon));
      const std::string b = trim(expr.substr(colon + 1));
      kind_of(a);
      kind_of(b);
      terms.push_back(Term::interaction(a, b));
    } else {
      terms.push_back(Term{kind_of(expr), expr, {}});
    }
  }
  return terms;
}

std::string study_summary_csv(const std::vector<CellResult>& cells) {
  std::ostringstream os;
  os << "N,J,m,T,sigma2,replicates,excluded,max,min,amplitude,mean,sd,"
        "shapiro_W,shapiro_p,p2.5,p97.5\n";
  for (const auto& cell : cells) {
    const auto& cfg = cell.config;
    const auto& s = cell.summary;
    os << cfg.n_units << "," << cfg.n_categories << "," << cfg.group_size << ","
       << cfg.n_times << "," << fmt(cfg.sigma2, "%g") << "," << cfg.replicates
       << "," << cell.excluded << "," << fmt_fixed6(s.maximum) << ","
       << fmt_fixed6(s.minimum) << "," << fmt_fixed6(s.amplitude) << ","
       << fmt_fixed6(s.mean) << "," << fmt_fixed6(s.sd) << ","
       << fmt_fixed6(s.shapiro_W) << "," << fmt_fixed6(s.shapiro_p) << ","
       << fmt_fixed6(s.p2_5) << "," << fmt_fixed6(s.p97_5) << "\n";
  }
  return os.str();
}

std::string histogram_csv(const std::vector<CellResult>& cells, int bin_count) {
  std::ostringstream os;
  os << "N,J,m,T,sigma2,bin_lo,bin_hi,count\n";
  for (const auto& cell : cells) {
    if (cell.lambdas.empty()) continue;
    const Histogram h = histogram_bins(cell.lambdas, bin_count);
    const auto& cfg = cell.config;
    for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
      os << cfg.n_units << "," << cfg.n_categories << "," << cfg.group_size
         << "," << cfg.n_times << "," << fmt(cfg.sigma2, "%g") << ","
         << fmt_fixed6(h.edges[b]) << "," << fmt_fixed6(h.edges[b + 1]) << ","
         << h.counts[b] << "\n";
    }
  }
  return os.str();
}

std::string curve_csv(const std::vector<PercentileCurvePoint>& points) {
  std::ostringstream os;
  os << "m,equi_mean,equi_p2.5,equi_p97.5,over_mean,over_p2.5,over_p97.5,"
        "equi_excluded,over_excluded\n";
  for (const auto& pt : points) {
    os << pt.m << "," << fmt_fixed6(pt.equi_mean) << ","
       << fmt_fixed6(pt.equi_p2_5) << "," << fmt_fixed6(pt.equi_p97_5) << ","
       << fmt_fixed6(pt.over_mean) << "," << fmt_fixed6(pt.over_p2_5) << ","
       << fmt_fixed6(pt.over_p97_5) << "," << pt.equi_excluded << ","
       << pt.over_excluded << "\n";
  }
  return os.str();
}

std::string estimates_csv(const FitResult& fit) {
  std::ostringstream os;
  os << "parameter,estimate,std_error\n";
  for (int k = 0; k < fit.n_parameters(); ++k) {
    os << fit.parameter_names[k] << "," << fmt(fit.beta[k]) << ","
       << fmt(fit.se_beta[k]) << "\n";
  }
  return os.str();
}

std::string random_effects_csv(const FitResult& fit,
                               const std::vector<std::string>& unit_labels) {
  std::ostringstream os;
  os << "unit,u_hat\n";
  for (int i = 0; i < fit.n_units; ++i) {
    const std::string label = i < static_cast<int>(unit_labels.size())
                                  ? unit_labels[i]
                                  : std::to_string(i + 1);
    os << label << "," << fmt(fit.u[i]) << "\n";
  }
  return os.str();
}

std::string fit_report_text(const FitResult& fit) {
  std::ostringstream os;
  os << "converged = " << (fit.converged ? "true" : "false") << "\n";
  os << "iterations = " << fit.iterations << "\n";
  os << "n_parameters = " << fit.n_parameters() << "\n";
  os << "sigma2 = " << fmt(fit.sigma2) << "\n";
  os << "loglik = " << fmt(fit.loglik) << "\n";
  os << "penalized_loglik = " << fmt(fit.penalized_loglik) << "\n";
  os << "deviance = " << fmt(fit.deviance) << "\n";
  if (!fit.message.empty()) os << "message = " << fit.message << "\n";
  return os.str();
}

std::string variance_table_csv(const DispersionReport& report,
                               const std::vector<std::string>& category_labels,
                               const std::vector<std::string>& time_labels) {
  const int J = static_cast<int>(report.observed_var.rows());
  const int T = static_cast<int>(report.observed_var.cols());
  auto cat = [&](int j) {
    return j < static_cast<int>(category_labels.size()) ? category_labels[j]
                                                        : std::to_string(j + 1);
  };
  std::ostringstream os;
  os << "time";
  for (int j = 0; j < J; ++j) os << ",observed_" << cat(j);
  for (int j = 0; j < J; ++j) os << ",expected_" << cat(j);
  os << "\n";
  for (int t = 0; t < T; ++t) {
    os << (t < static_cast<int>(time_labels.size()) ? time_labels[t]
                                                    : std::to_string(t + 1));
    for (int j = 0; j < J; ++j) os << "," << fmt(report.observed_var(j, t), "%.6g");
    for (int j = 0; j < J; ++j) os << "," << fmt(report.expected_var(j, t), "%.6g");
    os << "\n";
  }
  return os.str();
}

SelectionResult run_selection(const GroupedLongitudinalDataset& data,
                              const std::vector<CandidateModel>& models,
                              double alpha, const FitOptions& options) {
  if (models.empty()) {
    throw std::invalid_argument("run_selection: no candidate models");
  }
  SelectionResult out;
  for (const auto& cand : models) {
    FitResult res = fit(cand.spec, data, options);
    if (!res.converged) {
      throw UnconvergedError("run_selection: model '" + cand.label +
                             "' did not converge: " + res.message);
    }
    out.fits.push_back(std::move(res));
  }

  out.rows.resize(models.size());
  out.selected = 0;
  for (std::size_t k = 0; k < models.size(); ++k) {
    SelectionRow& row = out.rows[k];
    row.model_label = models[k].label;
    row.predictor = models[k].predictor_desc;
    if (k == 0) continue;
    // Nearest preceding model whose column space is contained in this one.
    for (int b = static_cast<int>(k) - 1; b >= 0; --b) {
      if (column_space_contained(out.fits[b].design, out.fits[k].design)) {
        row.compared_to = b;
        break;
      }
    }
    if (row.compared_to < 0) continue;
    const LrTestResult lr = lr_test(out.fits[row.compared_to], out.fits[k]);
    row.comparison =
        models[row.compared_to].label + " x " + models[k].label;
    row.df = lr.df;
    row.deviance_diff = lr.deviance_diff;
    row.p_value = lr.p_value;
    if (row.compared_to == out.selected && lr.df > 0 && lr.p_value < alpha) {
      out.selected = static_cast<int>(k);
    }
  }
  return out;
}

std::string selection_table_csv(const SelectionResult& result) {
  std::ostringstream os;
  os << "model,linear_predictor,comparison,df,deviance,p_value\n";
  for (const auto& row : result.rows) {
    os << row.model_label << "," << row.predictor << ",";
    if (row.compared_to >= 0) {
      os << row.comparison << "," << row.df << "," << fmt(row.deviance_diff, "%.6g")
         << "," << fmt(row.p_value, "%.6g");
    } else {
      os << ",,,";
    }
    os << "\n";
  }
  return os.str();
}

std::uint64_t fnv1a_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ValidationError("cannot open '" + path + "' for writing");
  }
  out << content;
  if (!out) {
    throw ValidationError("failed writing '" + path + "'");
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open '" + path + "'");
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace polydisp
