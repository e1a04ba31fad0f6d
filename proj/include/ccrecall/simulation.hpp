#pragma once

// Simulation designs: the balanced four-binary-covariate study with logistic
// exposure and outcome models, and the unconfounded single-stratum design
// used to illustrate the R-factor.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccrecall/data_model.hpp"
#include "ccrecall/estimators.hpp"

namespace ccrecall {

// Coefficients ordered (intercept, x1, x2, x3, x4, x1*x2).
using DesignCoefficients = std::array<double, 6>;

struct SimulationScenario {
  std::string name;
  int n = 2000;
  DesignCoefficients beta{};   // exposure model
  DesignCoefficients gamma{};  // untreated outcome model
  double gamma_t = 0;          // exposure effect on the logit scale
  RecallBias bias;
  int n_reps = 2000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedDataset {
  CaseControlData data;  // covariates x1..x4, reported exposure
  std::vector<int> t_true;
  std::vector<int> y0;
  std::vector<int> y1;
  double true_log_cor = 0;
};

// Covariate cell c in [0, 16) has x_k = bit (3 - (k-1)) of c; records are laid
// out in 16 consecutive blocks of n/16.
std::array<double, 4> covariate_cell(int cell);

// Log marginal COR from the population risks averaged over the 16 cells.
double true_log_marginal_cor(const DesignCoefficients& gamma, double gamma_t);
double true_log_marginal_cor(const SimulationScenario& s);

// gamma_t in [0, 10] whose true log marginal COR equals target.
double solve_gamma_t(const DesignCoefficients& gamma, double target);

SimulatedDataset simulate_dataset(const SimulationScenario& scenario, int rep_index);

// Exposure and outcome coefficient sets for the four specification scenarios
// "(cor, cor)", "(mis, cor)", "(cor, mis)", "(mis, mis)".
struct DesignPreset {
  std::string name;
  DesignCoefficients beta;
  DesignCoefficients gamma;
  std::array<double, 3> true_log_cor;  // targets for gamma_t
};
std::vector<DesignPreset> table2_designs();

// 4 designs x 3 effect sizes at sample size n, over-reporting (0.1, 0.1).
// Scenario k gets seed derive_seed(seed, k).
std::vector<SimulationScenario> table2_scenarios(int n, int n_reps, std::uint64_t seed);

// Line-based scenario file: "[name]" opens a scenario; keys n, beta, gamma,
// gamma_t or true_log_cor, over_report or under_report, n_reps, seed.
// '#' starts a comment.
std::vector<SimulationScenario> parse_scenarios(std::istream& in, std::uint64_t default_seed);

struct EstimatorSummary {
  MethodSpec spec;
  double mean_log_psi = 0;
  int succeeded = 0;
  int failed = 0;
};

struct StudyRow {
  std::string scenario;
  int n = 0;
  double true_log_cor = 0;
  std::vector<EstimatorSummary> estimators;
};

// Runs every estimator on every replicate; Crude is always included first.
std::vector<StudyRow> run_study(const std::vector<SimulationScenario>& scenarios,
                                const std::vector<MethodSpec>& estimators);

// Column label used in study reports ("crude", "ml", "s_prop", "s_prog", ...).
std::string study_column(Method m);

// scenario, n, true, then one column of mean log psi per estimator.
void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows);

// ---------------------------------------------------------------------------
// Unconfounded design: T ~ Bern(p_t), Y(0), Y(1) ~ Bern(p_y), no covariates,
// over-reporting among cases with probability eta1 (controls eta0).

struct NullDesign {
  int n = 2000;
  double p_exposure = 0.3;
  double p_outcome = 0.25;
  double eta0 = 0;
  double eta1 = 0;
};

SimulatedDataset simulate_null_dataset(const NullDesign& design, std::uint64_t seed);

struct Fig1Point {
  double eta1 = 0;
  double mean_log_psi_star = 0;
  double mean_log_ci_low = 0;   // Woolf interval, averaged on the log scale
  double mean_log_ci_high = 0;
  double fraction_significant = 0;
};

// Crude psi* against eta1 with 95% Woolf intervals, averaged over replicates.
std::vector<Fig1Point> fig1_experiment(const std::vector<double>& eta1_grid, int n_reps,
                                       std::uint64_t seed, const NullDesign& base = {});

}  // namespace ccrecall
