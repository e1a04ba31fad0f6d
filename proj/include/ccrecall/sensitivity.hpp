#pragma once

// Bootstrap inference, sensitivity grids over the recall-bias parameters,
// R-factor search and the psi vs psi* ordering conditions.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ccrecall/data_model.hpp"
#include "ccrecall/estimators.hpp"

namespace ccrecall {

enum class CiType { NormalLog, Percentile };

const char* to_string(CiType t);

struct BootstrapOptions {
  int n_boot = 500;
  double level = 0.95;
  std::uint64_t seed = 0;
  CiType ci = CiType::NormalLog;
  double max_failure_fraction = 0.05;
};

// Resamples records with replacement and re-runs the whole estimator on each
// resample. se_log_psi is the bootstrap standard deviation of log psi.
EstimateResult bootstrap_ci(const CaseControlData& data, const MethodSpec& spec,
                            const RecallBias& bias, const BootstrapOptions& options);

// CI excludes 1.
bool is_significant(const EstimateResult& r);

// ---------------------------------------------------------------------------

struct GridSpec {
  std::vector<double> axis0;  // control-bias values
  std::vector<double> axis1;  // case-bias values
  bool constrained_equal = false;  // diagonal theta0 = theta1 over axis0
};

// Values lo, lo+step, ... up to hi inclusive (with rounding slack).
std::vector<double> grid_axis(double lo, double hi, double step);

enum class CellStatus { Ok, Infeasible, Failed };

struct GridCell {
  double theta0 = 0;
  double theta1 = 0;
  CellStatus status = CellStatus::Ok;
  std::optional<EstimateResult> result;
  std::string message;
};

struct SensitivityGrid {
  BiasDirection direction = BiasDirection::UnderReporting;
  std::vector<double> axis0;
  std::vector<double> axis1;
  bool constrained_equal = false;
  std::vector<GridCell> cells;  // row-major over (axis0, axis1), or the diagonal
};

// Cell k is bootstrapped with seed derive_seed(options.seed, k).
SensitivityGrid sensitivity_scan(const CaseControlData& data, const MethodSpec& spec,
                                 BiasDirection direction, const GridSpec& grid,
                                 const BootstrapOptions& options);

// Long format: theta0, theta1, psi, log_psi, ci_low, ci_high, feasible, status.
// Parameter columns are named eta0/eta1 or zeta0/zeta1 by direction.
void write_grid_csv(std::ostream& out, const SensitivityGrid& grid);

// Largest feasible value of the case (which = 1) or control (which = 0)
// parameter over the tables the method uses on `data`.
double method_feasibility_bound(const CaseControlData& data, const MethodSpec& spec,
                                const RecallBias& bias, int which);

// ---------------------------------------------------------------------------

struct RFactorOptions {
  int varied = 0;  // 0 = control parameter, 1 = case parameter
  double fixed_other = 0;
  double alpha = 0.05;
  double scan_step = 0.005;
  double bracket_width = 0.002;
  BootstrapOptions boot;  // level is overridden by 1 - alpha
};

struct RFactorResult {
  std::optional<double> value;  // empty: no flip in the feasible range
  int varied = 0;
  double fixed_other = 0;
  double alpha = 0.05;
  bool initial_significant = false;
  double bracket_low = 0;
  double bracket_high = 0;
  double scanned_up_to = 0;
  int evaluations = 0;
  std::string note;
};

// Smallest value of the varied parameter at which the significance of the
// conclusion flips. Every evaluation reuses the same bootstrap seed so the
// interval is a deterministic function of the parameter.
RFactorResult r_factor(const CaseControlData& data, const MethodSpec& spec,
                       BiasDirection direction, const RFactorOptions& options);

// ---------------------------------------------------------------------------

enum class Ordering { PsiLeStar, PsiGeStar, Equal, Unknown };

const char* to_string(Ordering o);

// Pointwise comparison of psi(x) with psi*(x) from q*_y(x) = P(T*=1 | Y=y, x).
Ordering check_ordering_conditional(double q1_star, double q0_star, const RecallBias& bias,
                                    double tolerance = 1e-12);

// Sufficient conditions for the marginal ordering given the range of psi(x).
// A zero denominator parameter makes the threshold ratio +infinity.
Ordering check_ordering_marginal(double psi_x_min, double psi_x_max, const RecallBias& bias);

struct ConditionalOrderingSummary {
  double beta_y = 0;  // outcome coefficient of the q* model
  std::size_t le = 0, ge = 0, equal = 0;
};

// Fits logit q*_y(x) = b0 + b_y y + b_x' x and classifies every record at
// both y = 0 and y = 1 covariate values.
ConditionalOrderingSummary check_conditions_on_data(const CaseControlData& data,
                                                    const RecallBias& bias);

}  // namespace ccrecall
