#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "polydisp/errors.hpp"
#include "polydisp/io.hpp"
#include "polydisp/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace polydisp;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string data_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<double> sigma2;
  std::optional<std::string> reference_category;
  int workers = 0;
  int hist_bins = 0;
};

std::string join_args(int argc, char** argv) {
  std::ostringstream os;
  for (int k = 0; k < argc; ++k) {
    if (k) os << " ";
    os << argv[k];
  }
  return os.str();
}

json load_config(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void write_manifest(const fs::path& out_dir, const std::string& command_line,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ostringstream os;
  os << "tool = polydisp\n";
  os << "tool_version = " << kVersion << "\n";
  os << "command = " << command_line << "\n";
  for (const auto& kv : extra) os << kv.first << " = " << kv.second << "\n";
  write_text_file((out_dir / "manifest.txt").string(), os.str());
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig cfg;
  cfg.n_units = j.value("n_units", cfg.n_units);
  cfg.n_categories = j.value("n_categories", cfg.n_categories);
  cfg.group_size = j.value("group_size", cfg.group_size);
  cfg.n_times = j.value("n_times", cfg.n_times);
  cfg.sigma2 = j.value("sigma2", cfg.sigma2);
  if (j.contains("theta")) {
    cfg.theta = j["theta"].get<std::vector<double>>();
  } else {
    cfg.theta = default_theta(cfg.n_categories);
  }
  cfg.replicates = j.value("replicates", cfg.replicates);
  cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
  return cfg;
}

DatasetSchema schema_from_json(const json& cfg) {
  if (!cfg.contains("dataset")) {
    throw ValidationError("config: missing 'dataset' section");
  }
  const json& d = cfg["dataset"];
  DatasetSchema schema;
  schema.categories = d.value("categories", std::vector<std::string>{});
  schema.numeric_covariates =
      d.value("numeric_covariates", std::vector<std::string>{});
  schema.factor_covariates =
      d.value("factor_covariates", std::vector<std::string>{});
  if (d.contains("group_size")) {
    schema.declared_group_size = d["group_size"].get<int>();
  }
  if (schema.categories.size() < 2) {
    throw ValidationError("config: dataset.categories must list at least two labels");
  }
  return schema;
}

int reference_index(const DatasetSchema& schema, const json& cfg,
                    const CommonArgs& args) {
  std::string label = schema.categories.front();
  if (cfg.contains("reference_category")) {
    label = cfg["reference_category"].get<std::string>();
  }
  if (args.reference_category) label = *args.reference_category;
  for (std::size_t k = 0; k < schema.categories.size(); ++k) {
    if (schema.categories[k] == label) return static_cast<int>(k);
  }
  throw ValidationError("reference category '" + label +
                        "' is not among the declared categories");
}

ModelSpec model_from_json(const json& model_json, const DatasetSchema& schema,
                          int reference, const CommonArgs& args,
                          const json& cfg) {
  ModelSpec spec;
  spec.reference_category = reference;
  const auto exprs = model_json.value("terms", std::vector<std::string>{});
  spec.terms = parse_terms(exprs, schema);
  spec.random_intercept = model_json.value("random_intercept", true);
  if (cfg.contains("sigma2") && !cfg["sigma2"].is_null()) {
    spec.fixed_sigma2 = cfg["sigma2"].get<double>();
  }
  if (args.sigma2) spec.fixed_sigma2 = *args.sigma2;
  return spec;
}

std::string predictor_description(const json& model_json, bool random_intercept) {
  const auto exprs = model_json.value("terms", std::vector<std::string>{});
  std::string desc = "intercept";
  for (const auto& e : exprs) desc += " + " + e;
  if (random_intercept) desc += " + random intercept";
  return desc;
}

int run_simulate(const CommonArgs& args, const std::string& command_line) {
  const json cfg = load_config(args.config_path);
  ScenarioConfig scenario = scenario_from_json(cfg);
  if (args.seed) scenario.seed = *args.seed;
  if (args.sigma2) scenario.sigma2 = *args.sigma2;

  Rng rng(scenario.seed);
  const GroupedLongitudinalDataset data = simulate_dataset(scenario, rng);
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  write_dataset((out / "dataset.csv").string(), data);
  write_manifest(out, command_line,
                 {{"seed", std::to_string(scenario.seed)},
                  {"config", args.config_path},
                  {"config_hash", std::to_string(fnv1a_hash(read_text_file(args.config_path)))},
                  {"n_units", std::to_string(scenario.n_units)},
                  {"n_categories", std::to_string(scenario.n_categories)},
                  {"group_size", std::to_string(scenario.group_size)},
                  {"n_times", std::to_string(scenario.n_times)},
                  {"sigma2", std::to_string(scenario.sigma2)}});
  return 0;
}

struct LoadedData {
  DatasetSchema schema;
  GroupedLongitudinalDataset data;
  json cfg;
  int reference;
};

LoadedData load_data(const CommonArgs& args) {
  json cfg = load_config(args.config_path);
  DatasetSchema schema = schema_from_json(cfg);
  GroupedLongitudinalDataset data = read_dataset(args.data_path, schema);
  const int reference = reference_index(schema, cfg, args);
  return LoadedData{std::move(schema), std::move(data), std::move(cfg), reference};
}

void write_fit_outputs(const fs::path& out, const FitResult& res,
                       const GroupedLongitudinalDataset& data) {
  write_text_file((out / "fit_report.txt").string(), fit_report_text(res));
  write_text_file((out / "estimates.csv").string(), estimates_csv(res));
  write_text_file((out / "random_effects.csv").string(),
                  random_effects_csv(res, data.unit_labels));
}

int run_fit(const CommonArgs& args, const std::string& command_line,
            bool with_index) {
  LoadedData loaded = load_data(args);
  const json model_json = loaded.cfg.value("model", json::object());
  const ModelSpec spec =
      model_from_json(model_json, loaded.schema, loaded.reference, args, loaded.cfg);

  const FitResult res = fit(spec, loaded.data);
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  write_fit_outputs(out, res, loaded.data);

  std::vector<std::pair<std::string, std::string>> manifest{
      {"config", args.config_path},
      {"config_hash", std::to_string(fnv1a_hash(read_text_file(args.config_path)))},
      {"data", args.data_path},
      {"data_hash", std::to_string(loaded.data.fingerprint())},
      {"converged", res.converged ? "true" : "false"}};

  if (with_index) {
    const DispersionReport report = dispersion_index(loaded.data, res);
    write_text_file((out / "index_report.txt").string(), report.to_key_value());
    write_text_file((out / "index_table.csv").string(),
                    report.to_csv(loaded.data.category_labels,
                                  loaded.data.time_labels));
    manifest.emplace_back("lambda_longitudinal",
                          std::to_string(report.lambda_longitudinal));
  } else if (!res.converged) {
    std::cerr << "warning: " << res.message << "\n";
  }
  write_manifest(out, command_line, manifest);
  return 0;
}

int run_study(const CommonArgs& args, const std::string& command_line) {
  json cfg = json::object();
  if (!args.config_path.empty()) cfg = load_config(args.config_path);

  const std::uint64_t master_seed = args.seed.value_or(
      cfg.value("seed", static_cast<std::uint64_t>(20240901)));
  const int replicates = args.replicates.value_or(cfg.value("replicates", 200));

  StudyOptions options;
  options.workers = args.workers;

  const fs::path out(args.out_dir);
  fs::create_directories(out);

  std::vector<std::pair<std::string, std::string>> manifest{
      {"seed", std::to_string(master_seed)},
      {"replicates", std::to_string(replicates)},
      {"workers", std::to_string(options.workers)}};
  if (!args.config_path.empty()) {
    manifest.emplace_back("config", args.config_path);
    manifest.emplace_back(
        "config_hash",
        std::to_string(fnv1a_hash(read_text_file(args.config_path))));
  }

  if (cfg.contains("curve")) {
    const json& cj = cfg["curve"];
    ScenarioConfig tpl = scenario_from_json(cj.value("template", json::object()));
    if (tpl.seed == 0) tpl.seed = master_seed;
    tpl.replicates = replicates;
    const auto m_values = cj.value("m_values", std::vector<int>{1, 2, 5, 10, 15});
    const double s2_equi = cj.value("sigma2_equi", 0.01);
    const double s2_over = cj.value("sigma2_over", 10.0);
    const auto points = percentile_curve(tpl, m_values, s2_equi, s2_over, options);
    write_text_file((out / "curve.csv").string(), curve_csv(points));
    manifest.emplace_back("mode", "curve");
    write_manifest(out, command_line, manifest);
    return 0;
  }

  std::vector<ScenarioConfig> scenarios;
  if (cfg.contains("scenarios")) {
    std::uint64_t index = 0;
    for (const auto& sj : cfg["scenarios"]) {
      ScenarioConfig sc = scenario_from_json(sj);
      if (!sj.contains("replicates")) sc.replicates = replicates;
      if (!sj.contains("seed") || sc.seed == 0) {
        sc.seed = split_seed(master_seed, index);
      }
      ++index;
      scenarios.push_back(std::move(sc));
    }
  } else {
    scenarios = default_grid(master_seed, replicates);
    manifest.emplace_back("grid", "default");
  }

  const std::vector<CellResult> cells = run_study(scenarios, options);
  write_text_file((out / "study_summary.csv").string(), study_summary_csv(cells));
  if (args.hist_bins > 0) {
    write_text_file((out / "histograms.csv").string(),
                    histogram_csv(cells, args.hist_bins));
  }

  int total_excluded = 0;
  std::string unreliable;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    total_excluded += cells[c].excluded;
    if (cells[c].unreliable) {
      if (!unreliable.empty()) unreliable += ";";
      unreliable += std::to_string(c);
    }
  }
  manifest.emplace_back("cells", std::to_string(cells.size()));
  manifest.emplace_back("excluded_total", std::to_string(total_excluded));
  manifest.emplace_back("unreliable_cells",
                        unreliable.empty() ? "none" : unreliable);
  write_manifest(out, command_line, manifest);
  return 0;
}

int run_select(const CommonArgs& args, const std::string& command_line) {
  LoadedData loaded = load_data(args);
  if (!loaded.cfg.contains("models") || !loaded.cfg["models"].is_array() ||
      loaded.cfg["models"].empty()) {
    throw ValidationError("config: 'models' must be a non-empty array");
  }
  const double alpha = loaded.cfg.value("alpha", 0.05);

  std::vector<CandidateModel> candidates;
  int model_no = 0;
  for (const auto& mj : loaded.cfg["models"]) {
    CandidateModel cand;
    ++model_no;
    cand.label = mj.value("label", std::to_string(model_no));
    cand.spec = model_from_json(mj, loaded.schema, loaded.reference, args, loaded.cfg);
    cand.predictor_desc = predictor_description(mj, cand.spec.random_intercept);
    candidates.push_back(std::move(cand));
  }

  const SelectionResult sel = run_selection(loaded.data, candidates, alpha);
  const fs::path out(args.out_dir);
  fs::create_directories(out);
  write_text_file((out / "deviance_table.csv").string(), selection_table_csv(sel));

  const FitResult& best = sel.fits[sel.selected];
  write_fit_outputs(out, best, loaded.data);
  const DispersionReport report = dispersion_index(loaded.data, best);
  write_text_file((out / "index_report.txt").string(), report.to_key_value());
  write_text_file((out / "index_table.csv").string(),
                  report.to_csv(loaded.data.category_labels,
                                loaded.data.time_labels));
  write_text_file((out / "variance_table.csv").string(),
                  variance_table_csv(report, loaded.data.category_labels,
                                     loaded.data.time_labels));

  write_manifest(
      out, command_line,
      {{"config", args.config_path},
       {"config_hash", std::to_string(fnv1a_hash(read_text_file(args.config_path)))},
       {"data", args.data_path},
       {"data_hash", std::to_string(loaded.data.fingerprint())},
       {"alpha", std::to_string(alpha)},
       {"selected_model", sel.rows[sel.selected].model_label},
       {"lambda_longitudinal", std::to_string(report.lambda_longitudinal)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Mixed generalized-logits models and the longitudinal multinomial "
      "dispersion index for grouped polytomous data"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs args;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", args.config_path, "JSON configuration file");
    if (needs_data) {
      sub->add_option("--data", args.data_path, "dataset CSV (long format)")
          ->required();
    }
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "seed override");
    sub->add_option("--replicates", args.replicates, "replicate count override");
    sub->add_option("--workers", args.workers, "worker threads (0 = all cores)");
    sub->add_option("--sigma2", args.sigma2, "fix the variance component");
    sub->add_option("--reference-category", args.reference_category,
                    "reference category label");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "write one simulated dataset");
  add_common(simulate, false);
  simulate->get_option("--config")->required();

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model to a dataset");
  add_common(fit_cmd, true);
  fit_cmd->get_option("--config")->required();

  CLI::App* index_cmd =
      app.add_subcommand("index", "fit a model and compute the dispersion index");
  add_common(index_cmd, true);
  index_cmd->get_option("--config")->required();

  CLI::App* study = app.add_subcommand("study", "run a simulation study");
  add_common(study, false);
  study->add_option("--hist-bins", args.hist_bins,
                    "also write per-cell histograms with this many bins");

  CLI::App* select =
      app.add_subcommand("select", "nested-model deviance analysis");
  add_common(select, true);
  select->get_option("--config")->required();

  CLI11_PARSE(app, argc, argv);

  const std::string command_line = join_args(argc, argv);
  try {
    if (simulate->parsed()) return run_simulate(args, command_line);
    if (fit_cmd->parsed()) return run_fit(args, command_line, false);
    if (index_cmd->parsed()) return run_fit(args, command_line, true);
    if (study->parsed()) return run_study(args, command_line);
    if (select->parsed()) return run_select(args, command_line);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
