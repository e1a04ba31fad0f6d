#pragma once

// Core domain types for case-control data with a possibly misreported
// binary exposure: records, recall-bias parameters, estimate results, and
// CSV ingestion.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ccrecall {

enum class ErrorCode {
  // input / validation
  InvalidArgument,
  FileNotFound,
  MissingColumn,
  NonBinaryOutcome,
  NonBinaryExposure,
  RaggedRow,
  ParseError,
  Precondition,
  // estimation
  SingularDesign,
  NonConvergence,
  DegenerateLikelihood,
  DegenerateMarginal,
  EmptyStratum,
  EmptyStratumCell,
  ScoreFitFailure,
  InfeasibleBias,
  ZeroDenominator,
  TooManyFailedResamples,
};

const char* to_string(ErrorCode code);

// True for codes caused by bad input rather than a failed fit.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// ---------------------------------------------------------------------------
// Recall bias
// ---------------------------------------------------------------------------

enum class BiasDirection { None, OverReporting, UnderReporting };

const char* to_string(BiasDirection d);

// Over-reporting: theta_case = P(T*=1 | Y=1, T=0), theta_control = P(T*=1 | Y=0, T=0).
// Under-reporting: theta_case = P(T*=0 | Y=1, T=1), theta_control = P(T*=0 | Y=0, T=1).
class RecallBias {
 public:
  RecallBias() = default;
  RecallBias(BiasDirection direction, double theta_control, double theta_case);

  static RecallBias none() { return {}; }
  static RecallBias over(double eta0, double eta1) {
    return {BiasDirection::OverReporting, eta0, eta1};
  }
  static RecallBias under(double zeta0, double zeta1) {
    return {BiasDirection::UnderReporting, zeta0, zeta1};
  }

  BiasDirection direction() const { return direction_; }
  double theta_case() const { return theta_case_; }
  double theta_control() const { return theta_control_; }
  double theta(int y) const { return y == 1 ? theta_case_ : theta_control_; }

  // P(T*=1 | Y=y, T=0): nonzero only under over-reporting.
  double false_positive(int y) const {
    return direction_ == BiasDirection::OverReporting ? theta(y) : 0.0;
  }
  // P(T*=0 | Y=y, T=1): nonzero only under under-reporting.
  double false_negative(int y) const {
    return direction_ == BiasDirection::UnderReporting ? theta(y) : 0.0;
  }

  bool is_zero() const { return theta_case_ == 0.0 && theta_control_ == 0.0; }

  // Same direction with one parameter replaced (0 = control, 1 = case).
  RecallBias with(int which, double value) const;

  friend bool operator==(const RecallBias&, const RecallBias&) = default;

 private:
  BiasDirection direction_ = BiasDirection::None;
  double theta_control_ = 0.0;
  double theta_case_ = 0.0;
};

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

// Immutable individual-level case-control records.
class CaseControlData {
 public:
  CaseControlData(std::vector<int> y, std::vector<int> t_star, Eigen::MatrixXd x,
                  std::optional<std::vector<int>> stratum = std::nullopt,
                  std::vector<std::string> covariate_names = {});

  std::size_t n() const { return y_.size(); }
  std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }

  std::span<const int> y() const { return y_; }
  std::span<const int> t_star() const { return t_star_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const std::optional<std::vector<int>>& stratum() const { return stratum_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  std::size_t n_cases() const;

  // Throws Precondition unless both outcome classes are present.
  void require_both_outcomes() const;

  // Rows in the given order (duplicates allowed), e.g. a bootstrap resample.
  CaseControlData subset(std::span<const std::size_t> rows) const;

  // Design matrix [1, X].
  Eigen::MatrixXd design() const;

 private:
  std::vector<int> y_;
  std::vector<int> t_star_;
  Eigen::MatrixXd x_;
  std::optional<std::vector<int>> stratum_;
  std::vector<std::string> names_;
};

struct CsvSchema {
  std::string outcome = "y";
  std::string exposure = "t_star";
  // Empty means every column other than outcome, exposure and stratum.
  std::vector<std::string> covariates;
  std::optional<std::string> stratum;
};

CaseControlData load_csv(const std::string& path, const CsvSchema& schema);
CaseControlData parse_csv(std::istream& in, const CsvSchema& schema);
void write_csv(std::ostream& out, const CaseControlData& data, const CsvSchema& schema);

// Observed 2x2 table under T* for one stratum. Counts are stored as reals so a
// continuity correction can be applied; they are integer-valued otherwise.
struct StratumTable {
  double a_star = 0;  // exposed case
  double b_star = 0;  // exposed control
  double c_star = 0;  // unexposed case
  double d_star = 0;  // unexposed control

  double n_star() const { return a_star + b_star + c_star + d_star; }
  double cases() const { return a_star + c_star; }
  double controls() const { return b_star + d_star; }
};

// Largest value of the case (which = 1) or control (which = 0) parameter for
// which the corrected cells of `t` stay nonnegative.
double feasibility_bound(const StratumTable& t, BiasDirection direction, int which);

struct FeasibilityWarning {
  int stratum = 0;     // stratum label (0 when unstratified)
  int which = 0;       // 1 = case column, 0 = control column
  double value = 0;    // requested parameter
  double bound = 0;    // feasibility bound
  std::string message;
};

// Per-stratum check that bias-corrected counts would be nonnegative.
std::vector<FeasibilityWarning> validate_bias_feasibility(const CaseControlData& data,
                                                          const RecallBias& bias);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

enum class Method { Crude, ML, StratPropensity, StratPrognostic, StratUser, MantelHaenszel };

const char* to_string(Method m);
Method parse_method(const std::string& s);

struct EstimateResult {
  double log_psi = 0;
  std::optional<double> se_log_psi;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  Method method = Method::Crude;
  RecallBias bias;
  std::map<std::string, double> diagnostics;

  double psi() const;
  bool has_ci() const { return ci_low.has_value() && ci_high.has_value(); }
};

}  // namespace ccrecall
