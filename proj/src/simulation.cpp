#include "ccrecall/simulation.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "ccrecall/glm.hpp"
#include "ccrecall/parallel.hpp"
#include "ccrecall/rng.hpp"
#include "ccrecall/stratification.hpp"

namespace ccrecall {

void SimulationScenario::validate() const {
  if (n <= 0 || n % 16 != 0)
    throw Error(ErrorCode::InvalidArgument,
                "scenario '" + name + "': n must be a positive multiple of 16");
  if (n_reps <= 0) throw Error(ErrorCode::InvalidArgument, "scenario '" + name + "': n_reps must be positive");
}

std::array<double, 4> covariate_cell(int cell) {
  return {static_cast<double>((cell >> 3) & 1), static_cast<double>((cell >> 2) & 1),
          static_cast<double>((cell >> 1) & 1), static_cast<double>(cell & 1)};
}

namespace {

double design_logit(const DesignCoefficients& c, const std::array<double, 4>& x) {
  return c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2] + c[4] * x[3] + c[5] * x[0] * x[1];
}

}  // namespace

double true_log_marginal_cor(const DesignCoefficients& gamma, double gamma_t) {
  double p0 = 0, p1 = 0;
  for (int cell = 0; cell < 16; ++cell) {
    const double lp = design_logit(gamma, covariate_cell(cell));
    p0 += expit(lp) / 16.0;
    p1 += expit(lp + gamma_t) / 16.0;
  }
  return std::log(p1 * (1 - p0)) - std::log(p0 * (1 - p1));
}

double true_log_marginal_cor(const SimulationScenario& s) {
  return true_log_marginal_cor(s.gamma, s.gamma_t);
}

double solve_gamma_t(const DesignCoefficients& gamma, double target) {
  if (target == 0.0) return 0.0;
  const auto f = [&](double g) { return true_log_marginal_cor(gamma, g) - target; };
  if (f(0.0) * f(10.0) > 0)
    throw Error(ErrorCode::InvalidArgument, "target log COR not reachable with gamma_t in [0, 10]");
  const auto [lo, hi] = boost::math::tools::bisect(f, 0.0, 10.0, boost::math::tools::eps_tolerance<double>(50));
  return 0.5 * (lo + hi);
}

SimulatedDataset simulate_dataset(const SimulationScenario& scenario, int rep_index) {
  scenario.validate();
  Rng rng(derive_seed(scenario.seed, static_cast<std::uint64_t>(rep_index)));
  const int n = scenario.n;
  const int per_cell = n / 16;
  const auto& bias = scenario.bias;

  std::vector<int> y(n), t_star(n), t(n), y0(n), y1(n);
  Eigen::MatrixXd x(n, 4);
  for (int i = 0; i < n; ++i) {
    const auto cov = covariate_cell(i / per_cell);
    for (int k = 0; k < 4; ++k) x(i, k) = cov[static_cast<std::size_t>(k)];
    const double lp_y0 = design_logit(scenario.gamma, cov);
    // Draw order per record is fixed: T, Y(0), Y(1), RB1, RB0.
    t[i] = rng.bernoulli(expit(design_logit(scenario.beta, cov)));
    y0[i] = rng.bernoulli(expit(lp_y0));
    y1[i] = rng.bernoulli(expit(lp_y0 + scenario.gamma_t));
    const int rb1 = rng.bernoulli(bias.theta_case());
    const int rb0 = rng.bernoulli(bias.theta_control());
    y[i] = t[i] == 1 ? y1[i] : y0[i];
    const int rb = y[i] == 1 ? rb1 : rb0;
    switch (bias.direction()) {
      case BiasDirection::None: t_star[i] = t[i]; break;
      case BiasDirection::OverReporting: t_star[i] = t[i] + (1 - t[i]) * rb; break;
      case BiasDirection::UnderReporting: t_star[i] = t[i] * (1 - rb); break;
    }
  }
  SimulatedDataset out{CaseControlData(std::move(y), std::move(t_star), std::move(x), std::nullopt,
                                       {"x1", "x2", "x3", "x4"}),
                       std::move(t), std::move(y0), std::move(y1), true_log_marginal_cor(scenario)};
  return out;
}

std::vector<DesignPreset> table2_designs() {
  const DesignCoefficients beta_cor{-1, 1, -1, 1, 0, 0};
  const DesignCoefficients beta_mis{-1, 1, -1, 1, 0, 2};
  const DesignCoefficients gamma_cor{-2, 2, -2, 0, 1, 0};
  const DesignCoefficients gamma_mis{-2, 2, -2, 0, 1, -2};
  const std::array<double, 3> cor_targets{0.0, 0.357, 0.706};
  const std::array<double, 3> mis_targets{0.0, 0.310, 0.607};
  return {{"(cor, cor)", beta_cor, gamma_cor, cor_targets},
          {"(mis, cor)", beta_mis, gamma_cor, cor_targets},
          {"(cor, mis)", beta_cor, gamma_mis, mis_targets},
          {"(mis, mis)", beta_mis, gamma_mis, mis_targets}};
}

std::vector<SimulationScenario> table2_scenarios(int n, int n_reps, std::uint64_t seed) {
  std::vector<SimulationScenario> out;
  for (const auto& d : table2_designs()) {
    for (double target : d.true_log_cor) {
      SimulationScenario s;
      s.name = d.name;
      s.n = n;
      s.beta = d.beta;
      s.gamma = d.gamma;
      s.gamma_t = solve_gamma_t(d.gamma, target);
      s.bias = RecallBias::over(0.1, 0.1);
      s.n_reps = n_reps;
      s.seed = derive_seed(seed, out.size());
      out.push_back(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& value, std::size_t line_no) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto s = strip(item);
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "scenario line " + std::to_string(line_no) +
                                             ": cannot parse '" + item + "'");
    }
  }
  return out;
}

DesignCoefficients parse_coefficients(const std::string& value, std::size_t line_no) {
  const auto v = parse_list(value, line_no);
  if (v.size() != 5 && v.size() != 6)
    throw Error(ErrorCode::ParseError, "scenario line " + std::to_string(line_no) +
                                           ": expected 5 or 6 coefficients");
  DesignCoefficients c{};
  for (std::size_t k = 0; k < v.size(); ++k) c[k] = v[k];
  return c;
}

}  // namespace

std::vector<SimulationScenario> parse_scenarios(std::istream& in, std::uint64_t default_seed) {
  std::vector<SimulationScenario> out;
  std::vector<std::optional<double>> targets;
  std::vector<bool> seeded;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::ParseError, "scenario line " + std::to_string(line_no) + ": unclosed header");
      SimulationScenario s;
      s.name = strip(line.substr(1, line.size() - 2));
      out.push_back(s);
      targets.emplace_back();
      seeded.push_back(false);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || out.empty())
      throw Error(ErrorCode::ParseError, "scenario line " + std::to_string(line_no) +
                                             ": expected key=value inside a [scenario] block");
    const auto key = strip(line.substr(0, eq));
    const auto value = strip(line.substr(eq + 1));
    auto& s = out.back();
    if (key == "n") {
      s.n = static_cast<int>(parse_list(value, line_no).at(0));
    } else if (key == "n_reps") {
      s.n_reps = static_cast<int>(parse_list(value, line_no).at(0));
    } else if (key == "seed") {
      s.seed = std::stoull(value);
      seeded.back() = true;
    } else if (key == "beta") {
      s.beta = parse_coefficients(value, line_no);
    } else if (key == "gamma") {
      s.gamma = parse_coefficients(value, line_no);
    } else if (key == "gamma_t") {
      s.gamma_t = parse_list(value, line_no).at(0);
    } else if (key == "true_log_cor") {
      targets.back() = parse_list(value, line_no).at(0);
    } else if (key == "over_report" || key == "under_report") {
      const auto v = parse_list(value, line_no);
      if (v.size() != 2)
        throw Error(ErrorCode::ParseError, "scenario line " + std::to_string(line_no) +
                                               ": bias needs two values (control,case)");
      s.bias = key == "over_report" ? RecallBias::over(v[0], v[1]) : RecallBias::under(v[0], v[1]);
    } else {
      throw Error(ErrorCode::ParseError, "scenario line " + std::to_string(line_no) +
                                             ": unknown key '" + key + "'");
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (targets[k]) out[k].gamma_t = solve_gamma_t(out[k].gamma, *targets[k]);
    if (!seeded[k]) out[k].seed = derive_seed(default_seed, k);
    out[k].validate();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Study runner

std::string study_column(Method m) {
  switch (m) {
    case Method::Crude: return "crude";
    case Method::ML: return "ml";
    case Method::StratPropensity: return "s_prop";
    case Method::StratPrognostic: return "s_prog";
    case Method::StratUser: return "s_user";
    case Method::MantelHaenszel: return "mh";
  }
  return "unknown";
}

std::vector<StudyRow> run_study(const std::vector<SimulationScenario>& scenarios,
                                const std::vector<MethodSpec>& estimators) {
  std::vector<MethodSpec> specs;
  specs.push_back(MethodSpec{Method::Crude});
  for (const auto& e : estimators)
    if (e.method != Method::Crude) specs.push_back(e);

  std::vector<StudyRow> rows;
  for (const auto& scenario : scenarios) {
    scenario.validate();
    const auto reps = static_cast<std::size_t>(scenario.n_reps);
    // estimates[rep][estimator], NaN on failure
    std::vector<std::vector<double>> estimates(reps, std::vector<double>(specs.size()));
    parallel_for(reps, [&](std::size_t rep) {
      const auto sim = simulate_dataset(scenario, static_cast<int>(rep));
      for (std::size_t k = 0; k < specs.size(); ++k) {
        try {
          estimates[rep][k] = estimate(sim.data, specs[k], scenario.bias).log_psi;
        } catch (const Error&) {
          estimates[rep][k] = std::numeric_limits<double>::quiet_NaN();
        }
      }
    });

    StudyRow row;
    row.scenario = scenario.name;
    row.n = scenario.n;
    row.true_log_cor = true_log_marginal_cor(scenario);
    for (std::size_t k = 0; k < specs.size(); ++k) {
      EstimatorSummary s;
      s.spec = specs[k];
      double sum = 0;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        if (std::isfinite(estimates[rep][k])) {
          sum += estimates[rep][k];
          ++s.succeeded;
        } else {
          ++s.failed;
        }
      }
      s.mean_log_psi = s.succeeded > 0 ? sum / s.succeeded : std::numeric_limits<double>::quiet_NaN();
      row.estimators.push_back(s);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "scenario,n,true";
  if (!rows.empty())
    for (const auto& e : rows.front().estimators) out << ',' << study_column(e.spec.method);
  out << '\n' << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    out << '"' << r.scenario << "\"," << r.n << ',' << r.true_log_cor;
    for (const auto& e : r.estimators) {
      out << ',';
      if (std::isfinite(e.mean_log_psi))
        out << e.mean_log_psi;
      else
        out << "NA";
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Unconfounded design

SimulatedDataset simulate_null_dataset(const NullDesign& design, std::uint64_t seed) {
  if (design.n <= 0) throw Error(ErrorCode::InvalidArgument, "null design needs n > 0");
  Rng rng(seed);
  const RecallBias bias = RecallBias::over(design.eta0, design.eta1);
  std::vector<int> y(static_cast<std::size_t>(design.n)), t_star(y.size()), t(y.size()),
      y0(y.size()), y1(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    t[i] = rng.bernoulli(design.p_exposure);
    y0[i] = rng.bernoulli(design.p_outcome);
    y1[i] = rng.bernoulli(design.p_outcome);
    const int rb1 = rng.bernoulli(bias.theta_case());
    const int rb0 = rng.bernoulli(bias.theta_control());
    y[i] = t[i] == 1 ? y1[i] : y0[i];
    t_star[i] = t[i] + (1 - t[i]) * (y[i] == 1 ? rb1 : rb0);
  }
  return {CaseControlData(std::move(y), std::move(t_star), Eigen::MatrixXd(design.n, 0)),
          std::move(t), std::move(y0), std::move(y1), 0.0};
}

std::vector<Fig1Point> fig1_experiment(const std::vector<double>& eta1_grid, int n_reps,
                                       std::uint64_t seed, const NullDesign& base) {
  if (n_reps <= 0) throw Error(ErrorCode::InvalidArgument, "fig1 needs n_reps > 0");
  const double z = 1.959963984540054;
  std::vector<Fig1Point> out;
  for (std::size_t g = 0; g < eta1_grid.size(); ++g) {
    NullDesign design = base;
    design.eta1 = eta1_grid[g];
    std::vector<double> est(static_cast<std::size_t>(n_reps)), se(est.size());
    parallel_for(est.size(), [&](std::size_t rep) {
      const auto sim = simulate_null_dataset(design, derive_seed(derive_seed(seed, g), rep));
      const auto r = crude_cor(sim.data);
      est[rep] = r.log_psi;
      se[rep] = r.diagnostics.at("woolf_se");
    });
    Fig1Point pt;
    pt.eta1 = design.eta1;
    int significant = 0;
    for (std::size_t rep = 0; rep < est.size(); ++rep) {
      pt.mean_log_psi_star += est[rep] / n_reps;
      pt.mean_log_ci_low += (est[rep] - z * se[rep]) / n_reps;
      pt.mean_log_ci_high += (est[rep] + z * se[rep]) / n_reps;
      if (est[rep] - z * se[rep] > 0 || est[rep] + z * se[rep] < 0) ++significant;
    }
    pt.fraction_significant = static_cast<double>(significant) / n_reps;
    out.push_back(pt);
  }
  return out;
}

}  // namespace ccrecall
