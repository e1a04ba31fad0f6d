#pragma once

// Bias-corrected 2x2 tables, score-based strata, the stratified marginal
// odds-ratio estimator, and Mantel-Haenszel on corrected tables.

#include <span>
#include <vector>

#include "ccrecall/data_model.hpp"

namespace ccrecall {

struct CorrectedTable {
  double a = 0, b = 0, c = 0, d = 0;
  bool feasible = true;

  double n() const { return a + b + c + d; }
};

// Inverts the misreporting on the counts. Over-reporting:
//   a = (a* - eta1 (a*+c*)) / (1-eta1),  c = c* / (1-eta1)
//   b = (b* - eta0 (b*+d*)) / (1-eta0),  d = d* / (1-eta0)
// Under-reporting:
//   a = a* / (1-zeta1),  c = (c* - zeta1 (a*+c*)) / (1-zeta1)
//   b = b* / (1-zeta0),  d = (d* - zeta0 (b*+d*)) / (1-zeta0)
// Negative cells are kept and flagged through `feasible`.
CorrectedTable correct_table(const StratumTable& t, const RecallBias& bias);

enum class StrataScore { Propensity, Prognostic, UserProvided };

// Which records the prognostic outcome model is fitted on.
//   Auto: reported-unexposed subset under over-reporting, full data otherwise.
//   FullData: Y ~ T* + X on every record.
//   ReportedUnexposed: Y ~ X on records with T* = 0.
enum class PrognosticFit { Auto, FullData, ReportedUnexposed };

const char* to_string(StrataScore s);
const char* to_string(PrognosticFit f);
PrognosticFit parse_prognostic_fit(const std::string& s);

struct StratumAssignment {
  std::vector<int> stratum;  // 0-based index per record
  int n_strata = 0;
  std::vector<double> score;  // empty for user-provided strata
  std::vector<int> labels;    // user labels per stratum index (user-provided only)
};

// Type-7 empirical quantile cut into k groups. Intervals are right-closed so
// a score equal to a cut point goes to the lower stratum.
StratumAssignment quantile_strata(std::span<const double> score, int n_strata);

StratumAssignment build_strata(const CaseControlData& data, StrataScore score, int n_strata,
                               const RecallBias& bias,
                               PrognosticFit prognostic_fit = PrognosticFit::Auto);

std::vector<StratumTable> tabulate(const CaseControlData& data, const StratumAssignment& strata);

struct StratifiedOptions {
  bool continuity_correction = false;  // add 0.5 to every observed cell first
};

// Weighted stratum risks with s_i = n_i / N on corrected counts.
EstimateResult stratified_marginal_cor(std::span<const StratumTable> tables, const RecallBias& bias,
                                       const StratifiedOptions& options = {});
EstimateResult stratified_marginal_cor(const CaseControlData& data, const StratumAssignment& strata,
                                       const RecallBias& bias, const StratifiedOptions& options = {});

// Classical Mantel-Haenszel common odds ratio on corrected counts.
EstimateResult mantel_haenszel_cor(std::span<const StratumTable> tables, const RecallBias& bias,
                                   const StratifiedOptions& options = {});
EstimateResult mantel_haenszel_cor(const CaseControlData& data, const StratumAssignment& strata,
                                   const RecallBias& bias, const StratifiedOptions& options = {});

// Sample odds ratio of T* against Y on the pooled data; ignores recall bias.
EstimateResult crude_cor(const CaseControlData& data, const StratifiedOptions& options = {});

}  // namespace ccrecall
