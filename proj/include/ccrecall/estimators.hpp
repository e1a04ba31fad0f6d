#pragma once

// One entry point for every estimator so the bootstrap, sensitivity grid and
// simulation runner can re-run the full pipeline (score fit, strata,
// estimate) on any dataset.

#include <string>

#include "ccrecall/data_model.hpp"
#include "ccrecall/stratification.hpp"

namespace ccrecall {

struct MethodSpec {
  Method method = Method::StratPrognostic;
  int n_strata = 5;
  PrognosticFit prognostic_fit = PrognosticFit::Auto;
  bool continuity_correction = false;
  bool separate_outcomes = false;  // ML only
  // Mantel-Haenszel strata: user labels when present, else this score.
  StrataScore mh_score = StrataScore::Prognostic;
};

// Point estimate only; no standard error or interval.
EstimateResult estimate(const CaseControlData& data, const MethodSpec& spec, const RecallBias& bias);

// Strata the method would use on `data`, or a single stratum for methods
// that do not stratify.
StratumAssignment strata_for(const CaseControlData& data, const MethodSpec& spec,
                             const RecallBias& bias);

}  // namespace ccrecall
