#include "ccrecall/estimators.hpp"

#include "ccrecall/ml_estimator.hpp"

namespace ccrecall {

StratumAssignment strata_for(const CaseControlData& data, const MethodSpec& spec,
                             const RecallBias& bias) {
  switch (spec.method) {
    case Method::StratPropensity:
      return build_strata(data, StrataScore::Propensity, spec.n_strata, bias, spec.prognostic_fit);
    case Method::StratPrognostic:
      return build_strata(data, StrataScore::Prognostic, spec.n_strata, bias, spec.prognostic_fit);
    case Method::StratUser:
      return build_strata(data, StrataScore::UserProvided, spec.n_strata, bias);
    case Method::MantelHaenszel:
      return build_strata(data, data.stratum() ? StrataScore::UserProvided : spec.mh_score,
                          spec.n_strata, bias, spec.prognostic_fit);
    case Method::Crude:
    case Method::ML:
      break;
  }
  StratumAssignment single;
  single.n_strata = 1;
  single.stratum.assign(data.n(), 0);
  return single;
}

EstimateResult estimate(const CaseControlData& data, const MethodSpec& spec, const RecallBias& bias) {
  data.require_both_outcomes();
  const StratifiedOptions strat_options{spec.continuity_correction};
  EstimateResult r;
  switch (spec.method) {
    case Method::Crude:
      r = crude_cor(data, strat_options);
      break;
    case Method::ML: {
      MlOptions options;
      options.separate_outcomes = spec.separate_outcomes;
      r = ml_marginal_cor(data, bias, options);
      break;
    }
    case Method::StratPropensity:
    case Method::StratPrognostic:
    case Method::StratUser:
      r = stratified_marginal_cor(data, strata_for(data, spec, bias), bias, strat_options);
      break;
    case Method::MantelHaenszel:
      r = mantel_haenszel_cor(data, strata_for(data, spec, bias), bias, strat_options);
      break;
  }
  r.method = spec.method;
  r.bias = bias;
  return r;
}

}  // namespace ccrecall
