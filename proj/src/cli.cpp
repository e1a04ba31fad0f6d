#include "ccrecall/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccrecall/data_model.hpp"
#include "ccrecall/estimators.hpp"
#include "ccrecall/ml_estimator.hpp"
#include "ccrecall/sensitivity.hpp"
#include "ccrecall/simulation.hpp"
#include "ccrecall/version.hpp"

namespace ccrecall {

namespace {

using json = nlohmann::ordered_json;

struct RunConfig {
  std::string command;
  // data
  std::string input;
  std::string outcome_col = "y";
  std::string exposure_col = "t_star";
  std::vector<std::string> covariates;
  std::string stratum_col;
  // method
  std::string method = "strat-prognostic";
  int n_strata = 5;
  std::string prognostic_fit = "auto";
  bool continuity = false;
  bool separate_outcomes = false;
  // bias
  std::vector<double> over_report;
  std::vector<double> under_report;
  std::string direction = "under";
  // bootstrap
  int n_boot = 500;
  double level = 0.95;
  std::string ci = "normal-log";
  std::optional<std::uint64_t> seed;
  // sensitivity
  std::string grid = "0:0.5:0.1";
  bool diagonal = false;
  // r-factor
  std::string vary = "control";
  double fixed_other = 0;
  double alpha = 0.05;
  double scan_step = 0.005;
  // simulate
  std::string preset = "table2";
  std::string scenarios;
  int sim_n = 2000;
  int reps = 2000;
  std::vector<std::string> methods{"ml", "strat-propensity", "strat-prognostic"};
  bool fig1 = false;
  std::string eta1_grid = "0:0.5:0.05";
  std::string write_data;
  bool null_design = false;
  double eta1 = 0;
  // output
  std::string out;
  std::string format;
};

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); }

RecallBias resolve_bias(const RunConfig& c) {
  if (!c.over_report.empty() && !c.under_report.empty())
    invalid("--over-report and --under-report are mutually exclusive");
  const auto& v = c.over_report.empty() ? c.under_report : c.over_report;
  if (v.empty()) return RecallBias::none();
  if (v.size() != 2) invalid("bias flags take two values: control,case");
  return c.over_report.empty() ? RecallBias::under(v[0], v[1]) : RecallBias::over(v[0], v[1]);
}

BiasDirection resolve_direction(const RunConfig& c) {
  if (!c.over_report.empty()) return BiasDirection::OverReporting;
  if (!c.under_report.empty()) return BiasDirection::UnderReporting;
  if (c.direction == "over") return BiasDirection::OverReporting;
  if (c.direction == "under") return BiasDirection::UnderReporting;
  invalid("--direction must be 'over' or 'under'");
}

MethodSpec resolve_method(const RunConfig& c, const std::string& name) {
  MethodSpec spec;
  spec.method = parse_method(name);
  spec.n_strata = c.n_strata;
  spec.prognostic_fit = parse_prognostic_fit(c.prognostic_fit);
  spec.continuity_correction = c.continuity;
  spec.separate_outcomes = c.separate_outcomes;
  return spec;
}

BootstrapOptions resolve_boot(const RunConfig& c) {
  if (!c.seed) invalid("--seed is required for bootstrap and simulation commands");
  BootstrapOptions b;
  b.n_boot = c.n_boot;
  b.level = c.level;
  b.seed = *c.seed;
  if (c.ci == "normal-log")
    b.ci = CiType::NormalLog;
  else if (c.ci == "percentile")
    b.ci = CiType::Percentile;
  else
    invalid("--ci must be 'normal-log' or 'percentile'");
  return b;
}

std::vector<double> parse_axis(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      parts.push_back(std::stod(item));
    } catch (const std::exception&) {
      invalid("cannot parse grid component '" + item + "'");
    }
  }
  if (parts.size() == 1) return {parts[0]};
  if (parts.size() != 3) invalid("grid axis must be lo:hi:step or a single value");
  return grid_axis(parts[0], parts[1], parts[2]);
}

std::pair<std::vector<double>, std::vector<double>> parse_grid(const std::string& spec) {
  const auto comma = spec.find(',');
  if (comma == std::string::npos) {
    auto axis = parse_axis(spec);
    return {axis, axis};
  }
  return {parse_axis(spec.substr(0, comma)), parse_axis(spec.substr(comma + 1))};
}

CaseControlData load_data(const RunConfig& c) {
  if (c.input.empty()) invalid("--input is required");
  CsvSchema schema;
  schema.outcome = c.outcome_col;
  schema.exposure = c.exposure_col;
  schema.covariates = c.covariates;
  if (!c.stratum_col.empty()) schema.stratum = c.stratum_col;
  return load_csv(c.input, schema);
}

json bias_json(const RecallBias& b) {
  return {{"direction", to_string(b.direction())},
          {"theta_control", b.theta_control()},
          {"theta_case", b.theta_case()}};
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json result_json(const EstimateResult& r) {
  json j;
  j["method"] = to_string(r.method);
  j["psi"] = finite_or_null(r.psi());
  j["log_psi"] = finite_or_null(r.log_psi);
  j["se_log_psi"] = r.se_log_psi ? json(*r.se_log_psi) : json(nullptr);
  j["ci"] = r.has_ci() ? json::array({*r.ci_low, *r.ci_high}) : json(nullptr);
  j["bias"] = bias_json(r.bias);
  json diag = json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = finite_or_null(v);
  j["diagnostics"] = diag;
  return j;
}

json config_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  if (c.command != "simulate") {
    j["input"] = c.input;
    j["outcome_col"] = c.outcome_col;
    j["exposure_col"] = c.exposure_col;
    j["covariates"] = c.covariates;
    j["stratum_col"] = c.stratum_col.empty() ? json(nullptr) : json(c.stratum_col);
  }
  j["method"] = c.method;
  j["strata"] = c.n_strata;
  j["prognostic_fit"] = c.prognostic_fit;
  j["continuity"] = c.continuity;
  j["separate_outcomes"] = c.separate_outcomes;
  j["over_report"] = c.over_report;
  j["under_report"] = c.under_report;
  j["boot"] = c.n_boot;
  j["level"] = c.level;
  j["ci"] = c.ci;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  if (c.command == "sensitivity") {
    j["direction"] = c.direction;
    j["grid"] = c.grid;
    j["diagonal"] = c.diagonal;
  }
  if (c.command == "rfactor") {
    j["direction"] = c.direction;
    j["vary"] = c.vary;
    j["fixed"] = c.fixed_other;
    j["alpha"] = c.alpha;
    j["scan_step"] = c.scan_step;
  }
  if (c.command == "simulate") {
    j["preset"] = c.scenarios.empty() ? json(c.preset) : json(nullptr);
    j["scenarios"] = c.scenarios;
    j["n"] = c.sim_n;
    j["reps"] = c.reps;
    j["methods"] = c.methods;
    j["fig1"] = c.fig1;
    j["eta1_grid"] = c.eta1_grid;
    j["write_data"] = c.write_data;
    j["null_design"] = c.null_design;
    j["eta1"] = c.eta1;
  }
  j["out"] = c.out;
  j["format"] = c.format;
  return j;
}

json envelope(const RunConfig& c) {
  json j;
  j["tool"] = "ccrecall";
  j["version"] = kVersion;
  j["config"] = config_json(c);
  return j;
}

// Writes to --out when given, otherwise to `out`.
void emit(const RunConfig& c, std::ostream& out, const std::string& text) {
  if (c.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(c.out, std::ios::binary);
  if (!f) invalid("cannot write '" + c.out + "'");
  f << text;
}

std::string csv_preamble(const RunConfig& c) {
  return "# ccrecall " + std::string(kVersion) + "\n# config: " + config_json(c).dump() + "\n";
}

// ---------------------------------------------------------------------------

void cmd_estimate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto data = load_data(c);
  const auto bias = resolve_bias(c);
  const auto spec = resolve_method(c, c.method);
  json warnings = json::array();
  for (const auto& w : validate_bias_feasibility(data, bias)) {
    err << "warning: " << w.message << '\n';
    warnings.push_back(w.message);
  }
  EstimateResult r;
  if (c.n_boot > 0)
    r = bootstrap_ci(data, spec, bias, resolve_boot(c));
  else
    r = estimate(data, spec, bias);

  json j = envelope(c);
  const json rj = result_json(r);
  for (const auto& [k, v] : rj.items()) j[k] = v;
  j["n"] = data.n();
  j["p"] = data.p();
  j["feasibility_warnings"] = warnings;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  emit(c, out, j.dump(2) + "\n");
}

void cmd_sensitivity(const RunConfig& c, std::ostream& out) {
  const auto data = load_data(c);
  const auto spec = resolve_method(c, c.method);
  const auto direction = resolve_direction(c);
  const auto [axis0, axis1] = parse_grid(c.grid);
  const auto grid = sensitivity_scan(data, spec, direction, {axis0, axis1, c.diagonal}, resolve_boot(c));

  json summary = envelope(c);
  std::size_t ok = 0, infeasible = 0, failed = 0;
  for (const auto& cell : grid.cells)
    (cell.status == CellStatus::Ok ? ok : cell.status == CellStatus::Infeasible ? infeasible : failed)++;
  summary["cells"] = grid.cells.size();
  summary["ok"] = ok;
  summary["infeasible"] = infeasible;
  summary["failed"] = failed;
  summary["direction"] = to_string(direction);

  if (c.format == "json") {
    json cells = json::array();
    for (const auto& cell : grid.cells) {
      json jc;
      jc["theta0"] = cell.theta0;
      jc["theta1"] = cell.theta1;
      jc["status"] = cell.status == CellStatus::Ok ? "ok"
                     : cell.status == CellStatus::Infeasible ? "infeasible" : "failed";
      jc["result"] = cell.result ? result_json(*cell.result) : json(nullptr);
      if (!cell.message.empty()) jc["message"] = cell.message;
      cells.push_back(jc);
    }
    summary["grid"] = cells;
    emit(c, out, summary.dump(2) + "\n");
    return;
  }
  std::ostringstream csv;
  csv << csv_preamble(c);
  write_grid_csv(csv, grid);
  emit(c, out, csv.str());
  if (!c.out.empty()) {
    std::ofstream f(c.out + ".summary.json", std::ios::binary);
    f << summary.dump(2) << '\n';
  }
}

void cmd_rfactor(const RunConfig& c, std::ostream& out) {
  const auto data = load_data(c);
  const auto spec = resolve_method(c, c.method);
  const auto direction = resolve_direction(c);
  RFactorOptions options;
  if (c.vary == "case")
    options.varied = 1;
  else if (c.vary == "control")
    options.varied = 0;
  else
    invalid("--vary must be 'case' or 'control'");
  options.fixed_other = c.fixed_other;
  options.alpha = c.alpha;
  options.scan_step = c.scan_step;
  options.boot = resolve_boot(c);
  const auto r = r_factor(data, spec, direction, options);

  json j = envelope(c);
  j["status"] = r.value ? "found" : "NotFound";
  j["value"] = r.value ? json(*r.value) : json(nullptr);
  j["varied"] = r.varied == 1 ? "case-bias" : "control-bias";
  j["fixed_other"] = r.fixed_other;
  j["alpha"] = r.alpha;
  j["direction"] = to_string(direction);
  j["initial_significant"] = r.initial_significant;
  j["bracket"] = r.value ? json::array({r.bracket_low, r.bracket_high}) : json(nullptr);
  j["scanned_up_to"] = r.scanned_up_to;
  j["evaluations"] = r.evaluations;
  j["note"] = r.note;
  j["seed"] = *c.seed;
  emit(c, out, j.dump(2) + "\n");
}

void cmd_check_conditions(const RunConfig& c, std::ostream& out) {
  const auto data = load_data(c);
  const auto bias = resolve_bias(c);
  if (bias.direction() == BiasDirection::None)
    invalid("check-conditions needs --over-report or --under-report");
  const auto summary = check_conditions_on_data(data, bias);

  MlOptions ml_options;
  ml_options.separate_outcomes = c.separate_outcomes;
  const auto fit = fit_ml(data, bias, ml_options);
  double lo = INFINITY, hi = -INFINITY;
  for (Eigen::Index i = 0; i < data.x().rows(); ++i) {
    const auto xi = data.x().row(i).transpose();
    const double m1 = fit.params.outcome_prob(1, xi), m0 = fit.params.outcome_prob(0, xi);
    const double psi_x = m1 * (1 - m0) / (m0 * (1 - m1));
    lo = std::min(lo, psi_x);
    hi = std::max(hi, psi_x);
  }

  json j = envelope(c);
  j["bias"] = bias_json(bias);
  j["q_star_beta_y"] = summary.beta_y;
  j["conditional"] = {{"psi_le_psi_star", summary.le},
                      {"psi_ge_psi_star", summary.ge},
                      {"indeterminate_at_equality", summary.equal}};
  j["psi_x_range"] = json::array({lo, hi});
  j["marginal"] = to_string(check_ordering_marginal(lo, hi, bias));
  emit(c, out, j.dump(2) + "\n");
}

void cmd_simulate(const RunConfig& c, std::ostream& out) {
  if (!c.seed) invalid("--seed is required for bootstrap and simulation commands");
  const std::uint64_t seed = *c.seed;

  if (!c.write_data.empty()) {
    CsvSchema schema;
    std::ofstream f(c.write_data, std::ios::binary);
    if (!f) invalid("cannot write '" + c.write_data + "'");
    if (c.null_design) {
      NullDesign d;
      d.n = c.sim_n;
      d.eta1 = c.eta1;
      write_csv(f, simulate_null_dataset(d, seed).data, schema);
    } else {
      const auto scenarios = table2_scenarios(c.sim_n, 1, seed);
      write_csv(f, simulate_dataset(scenarios.front(), 0).data, schema);
    }
  }

  if (c.fig1) {
    const auto points = fig1_experiment(parse_axis(c.eta1_grid), c.reps, seed);
    std::ostringstream csv;
    csv << csv_preamble(c) << "eta1,psi_star,ci_low,ci_high,fraction_significant\n"
        << std::fixed << std::setprecision(4);
    for (const auto& p : points)
      csv << p.eta1 << ',' << std::exp(p.mean_log_psi_star) << ',' << std::exp(p.mean_log_ci_low)
          << ',' << std::exp(p.mean_log_ci_high) << ',' << p.fraction_significant << '\n';
    emit(c, out, csv.str());
    return;
  }

  std::vector<SimulationScenario> scenarios;
  if (!c.scenarios.empty()) {
    std::ifstream f(c.scenarios);
    if (!f) throw Error(ErrorCode::FileNotFound, "cannot open '" + c.scenarios + "'");
    scenarios = parse_scenarios(f, seed);
  } else if (c.preset == "table2") {
    scenarios = table2_scenarios(c.sim_n, c.reps, seed);
  } else {
    invalid("unknown preset '" + c.preset + "'");
  }
  std::vector<MethodSpec> specs;
  for (const auto& m : c.methods) specs.push_back(resolve_method(c, m));
  const auto rows = run_study(scenarios, specs);

  std::ostringstream csv;
  csv << csv_preamble(c);
  for (const auto& r : rows)
    for (const auto& e : r.estimators)
      if (e.failed > 0)
        csv << "# failures: " << r.scenario << " true=" << r.true_log_cor << ' '
            << study_column(e.spec.method) << '=' << e.failed << '\n';
  write_study_csv(csv, rows);
  emit(c, out, csv.str());
}

void add_data_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--input", c.input, "CSV file with a header row")->required();
  cmd->add_option("--outcome-col", c.outcome_col, "binary outcome column")->capture_default_str();
  cmd->add_option("--exposure-col", c.exposure_col, "binary reported-exposure column")->capture_default_str();
  cmd->add_option("--covariates", c.covariates, "comma-separated numeric covariate columns (default: all others)")
      ->delimiter(',');
  cmd->add_option("--stratum-col", c.stratum_col, "integer stratum label column");
}

void add_method_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--method", c.method, "crude, ml, strat-propensity, strat-prognostic, strat-user, mh")
      ->capture_default_str();
  cmd->add_option("--strata", c.n_strata, "number of score strata")->capture_default_str();
  cmd->add_option("--prognostic-fit", c.prognostic_fit, "auto, full-data, reported-unexposed")
      ->capture_default_str();
  cmd->add_flag("--continuity", c.continuity, "add 0.5 to every observed cell");
  cmd->add_flag("--separate-outcomes", c.separate_outcomes, "ML: separate outcome coefficients per exposure arm");
}

void add_bias_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--over-report", c.over_report, "eta0,eta1")->delimiter(',')->expected(2);
  cmd->add_option("--under-report", c.under_report, "zeta0,zeta1")->delimiter(',')->expected(2);
}

void add_boot_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--boot", c.n_boot, "bootstrap resamples")->capture_default_str();
  cmd->add_option("--level", c.level, "confidence level")->capture_default_str();
  cmd->add_option("--ci", c.ci, "normal-log or percentile")->capture_default_str();
  cmd->add_option("--seed", c.seed, "master seed for all randomness");
}

void add_output_options(CLI::App* cmd, RunConfig& c, const std::string& default_format) {
  cmd->add_option("--out", c.out, "output file (default stdout)");
  cmd->add_option("--format", c.format, "json or csv (default " + default_format + ")");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Causal odds ratios for case-control data under recall bias", "ccrecall"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* estimate_cmd = app.add_subcommand("estimate", "point estimate with bootstrap CI");
  add_data_options(estimate_cmd, c);
  add_method_options(estimate_cmd, c);
  add_bias_options(estimate_cmd, c);
  add_boot_options(estimate_cmd, c);
  add_output_options(estimate_cmd, c, "json");

  auto* sens_cmd = app.add_subcommand("sensitivity", "grid of estimates over bias parameters");
  add_data_options(sens_cmd, c);
  add_method_options(sens_cmd, c);
  add_bias_options(sens_cmd, c);
  add_boot_options(sens_cmd, c);
  sens_cmd->add_option("--direction", c.direction, "over or under")->capture_default_str();
  sens_cmd->add_option("--grid", c.grid, "lo:hi:step[,lo:hi:step] for (control, case)")->capture_default_str();
  sens_cmd->add_flag("--diagonal", c.diagonal, "restrict to equal control and case bias");
  add_output_options(sens_cmd, c, "csv");

  auto* rf_cmd = app.add_subcommand("rfactor", "minimal recall bias that flips significance");
  add_data_options(rf_cmd, c);
  add_method_options(rf_cmd, c);
  add_bias_options(rf_cmd, c);
  add_boot_options(rf_cmd, c);
  rf_cmd->add_option("--direction", c.direction, "over or under")->capture_default_str();
  rf_cmd->add_option("--vary", c.vary, "case or control")->capture_default_str();
  rf_cmd->add_option("--fixed", c.fixed_other, "value of the other parameter")->capture_default_str();
  rf_cmd->add_option("--alpha", c.alpha, "significance level")->capture_default_str();
  rf_cmd->add_option("--scan-step", c.scan_step, "scan increment")->capture_default_str();
  add_output_options(rf_cmd, c, "json");

  auto* sim_cmd = app.add_subcommand("simulate", "simulation study report");
  add_method_options(sim_cmd, c);
  add_boot_options(sim_cmd, c);
  sim_cmd->add_option("--preset", c.preset, "built-in scenario set")->capture_default_str();
  sim_cmd->add_option("--scenarios", c.scenarios, "scenario file");
  sim_cmd->add_option("--n", c.sim_n, "sample size for presets")->capture_default_str();
  sim_cmd->add_option("--reps", c.reps, "replicates per scenario")->capture_default_str();
  sim_cmd->add_option("--methods", c.methods, "estimators besides crude")->delimiter(',');
  sim_cmd->add_flag("--fig1", c.fig1, "crude estimate against over-reporting in the unconfounded design");
  sim_cmd->add_option("--eta1-grid", c.eta1_grid, "lo:hi:step for --fig1")->capture_default_str();
  sim_cmd->add_option("--write-data", c.write_data, "also write one simulated dataset as CSV");
  sim_cmd->add_flag("--null-design", c.null_design, "--write-data uses the unconfounded design");
  sim_cmd->add_option("--eta1", c.eta1, "case over-reporting for --null-design data")->capture_default_str();
  add_output_options(sim_cmd, c, "csv");

  auto* check_cmd = app.add_subcommand("check-conditions", "ordering of psi and psi* under the given bias");
  add_data_options(check_cmd, c);
  add_bias_options(check_cmd, c);
  check_cmd->add_flag("--separate-outcomes", c.separate_outcomes, "separate outcome coefficients per arm");
  add_output_options(check_cmd, c, "json");

  try {
    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    const bool csv_default = sens_cmd->parsed() || sim_cmd->parsed();
    if (c.format.empty()) c.format = csv_default ? "csv" : "json";
    if (c.format != "json" && c.format != "csv") invalid("--format must be json or csv");
    if (estimate_cmd->parsed()) {
      c.command = "estimate";
      cmd_estimate(c, out, err);
    } else if (sens_cmd->parsed()) {
      c.command = "sensitivity";
      cmd_sensitivity(c, out);
    } else if (rf_cmd->parsed()) {
      c.command = "rfactor";
      cmd_rfactor(c, out);
    } else if (sim_cmd->parsed()) {
      c.command = "simulate";
      cmd_simulate(c, out);
    } else if (check_cmd->parsed()) {
      c.command = "check-conditions";
      cmd_check_conditions(c, out);
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return is_validation_error(e.code()) ? kExitValidation : kExitEstimation;
  }
  return 0;
}

}  // namespace ccrecall
