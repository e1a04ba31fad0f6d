#include "ccrecall/stratification.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "ccrecall/glm.hpp"

namespace ccrecall {

CorrectedTable correct_table(const StratumTable& t, const RecallBias& bias) {
  CorrectedTable out{t.a_star, t.b_star, t.c_star, t.d_star, true};
  const double th1 = bias.theta_case();
  const double th0 = bias.theta_control();
  switch (bias.direction()) {
    case BiasDirection::None:
      break;
    case BiasDirection::OverReporting:
      out.a = (t.a_star - th1 * t.cases()) / (1.0 - th1);
      out.c = t.c_star / (1.0 - th1);
      out.b = (t.b_star - th0 * t.controls()) / (1.0 - th0);
      out.d = t.d_star / (1.0 - th0);
      break;
    case BiasDirection::UnderReporting:
      out.a = t.a_star / (1.0 - th1);
      out.c = (t.c_star - th1 * t.cases()) / (1.0 - th1);
      out.b = t.b_star / (1.0 - th0);
      out.d = (t.d_star - th0 * t.controls()) / (1.0 - th0);
      break;
  }
  out.feasible = out.a >= 0 && out.b >= 0 && out.c >= 0 && out.d >= 0;
  return out;
}

const char* to_string(StrataScore s) {
  switch (s) {
    case StrataScore::Propensity: return "propensity";
    case StrataScore::Prognostic: return "prognostic";
    case StrataScore::UserProvided: return "user";
  }
  return "unknown";
}

const char* to_string(PrognosticFit f) {
  switch (f) {
    case PrognosticFit::Auto: return "auto";
    case PrognosticFit::FullData: return "full-data";
    case PrognosticFit::ReportedUnexposed: return "reported-unexposed";
  }
  return "unknown";
}

PrognosticFit parse_prognostic_fit(const std::string& s) {
  for (auto f : {PrognosticFit::Auto, PrognosticFit::FullData, PrognosticFit::ReportedUnexposed})
    if (s == to_string(f)) return f;
  throw Error(ErrorCode::InvalidArgument, "unknown prognostic fit '" + s + "'");
}

// ---------------------------------------------------------------------------
// Strata

StratumAssignment quantile_strata(std::span<const double> score, int n_strata) {
  if (n_strata < 1) throw Error(ErrorCode::InvalidArgument, "number of strata must be positive");
  if (score.empty()) throw Error(ErrorCode::Precondition, "no scores to stratify");
  std::vector<double> sorted(score.begin(), score.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();

  std::vector<double> cuts;
  for (int j = 1; j < n_strata; ++j) {
    const double h = static_cast<double>(n - 1) * j / n_strata;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, n - 1);
    cuts.push_back(sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]));
  }

  StratumAssignment out;
  out.n_strata = n_strata;
  out.score.assign(score.begin(), score.end());
  out.stratum.resize(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) {
    int k = 0;
    while (k < n_strata - 1 && score[i] > cuts[static_cast<std::size_t>(k)]) ++k;
    out.stratum[i] = k;
  }
  return out;
}

namespace {

Eigen::VectorXd as_vector(std::span<const int> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

LogisticFit fit_score_model(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                            const Eigen::VectorXd& weights, const char* what) {
  try {
    auto fit = fit_logistic(design, response, weights);
    if (!fit.converged)
      throw Error(ErrorCode::ScoreFitFailure, std::string(what) + " model did not converge (" +
                                                  to_string(fit.status) + ")");
    return fit;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ScoreFitFailure) throw;
    throw Error(ErrorCode::ScoreFitFailure, std::string(what) + " model: " + e.what());
  }
}

std::vector<double> prognostic_score(const CaseControlData& data, const RecallBias& bias,
                                     PrognosticFit mode) {
  if (mode == PrognosticFit::Auto)
    mode = bias.direction() == BiasDirection::OverReporting ? PrognosticFit::ReportedUnexposed
                                                            : PrognosticFit::FullData;
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto p = static_cast<Eigen::Index>(data.p());
  const Eigen::VectorXd y = as_vector(data.y());
  const Eigen::VectorXd t = as_vector(data.t_star());
  Eigen::VectorXd coef_x;

  if (mode == PrognosticFit::ReportedUnexposed) {
    // Under over-reporting T* = 0 implies T = 0, so this subset carries the
    // untreated outcome model.
    Eigen::VectorXd w = (t.array() == 0.0).cast<double>();
    if (w.sum() == 0)
      throw Error(ErrorCode::Precondition, "prognostic score: no records with T* = 0");
    const auto fit = fit_score_model(data.design(), y, w, "prognostic");
    coef_x = fit.coefficients.tail(p);
  } else {
    Eigen::MatrixXd design(n, p + 2);
    design << Eigen::VectorXd::Ones(n), t, data.x();
    const auto fit = fit_score_model(design, y, Eigen::VectorXd::Ones(n), "prognostic");
    coef_x = fit.coefficients.tail(p);
  }
  const Eigen::VectorXd s = data.x() * coef_x;
  return {s.data(), s.data() + s.size()};
}

std::vector<double> propensity_score(const CaseControlData& data) {
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto fit = fit_score_model(data.design(), as_vector(data.t_star()),
                                   Eigen::VectorXd::Ones(n), "propensity");
  std::vector<double> s(data.n());
  for (Eigen::Index i = 0; i < n; ++i)
    s[static_cast<std::size_t>(i)] = expit(linear_predictor(fit.coefficients, data.x().row(i).transpose()));
  return s;
}

void require_cases_and_controls(const CaseControlData& data, const StratumAssignment& strata) {
  std::vector<int> cases(static_cast<std::size_t>(strata.n_strata), 0);
  std::vector<int> controls(cases.size(), 0);
  for (std::size_t i = 0; i < data.n(); ++i)
    (data.y()[i] == 1 ? cases : controls)[static_cast<std::size_t>(strata.stratum[i])]++;
  std::ostringstream bad;
  for (std::size_t k = 0; k < cases.size(); ++k)
    if (cases[k] == 0 || controls[k] == 0)
      bad << (bad.tellp() > 0 ? ", " : "") << (strata.labels.empty() ? static_cast<int>(k + 1)
                                                                    : strata.labels[k]);
  if (bad.tellp() > 0)
    throw Error(ErrorCode::EmptyStratum, "strata without both cases and controls: " + bad.str());
}

}  // namespace

StratumAssignment build_strata(const CaseControlData& data, StrataScore score, int n_strata,
                               const RecallBias& bias, PrognosticFit prognostic_fit) {
  StratumAssignment out;
  switch (score) {
    case StrataScore::UserProvided: {
      out.stratum.assign(data.n(), 0);
      if (!data.stratum()) {
        out.n_strata = 1;
        out.labels = {0};
        break;
      }
      std::map<int, int> index;
      for (int label : *data.stratum()) index.emplace(label, 0);
      for (auto& [label, k] : index) {
        k = out.n_strata++;
        out.labels.push_back(label);
      }
      for (std::size_t i = 0; i < data.n(); ++i) out.stratum[i] = index[(*data.stratum())[i]];
      break;
    }
    case StrataScore::Propensity:
    case StrataScore::Prognostic: {
      if (n_strata < 2) throw Error(ErrorCode::InvalidArgument, "score strata need n_strata >= 2");
      const auto s = score == StrataScore::Propensity ? propensity_score(data)
                                                      : prognostic_score(data, bias, prognostic_fit);
      out = quantile_strata(s, n_strata);
      break;
    }
  }
  require_cases_and_controls(data, out);
  return out;
}

std::vector<StratumTable> tabulate(const CaseControlData& data, const StratumAssignment& strata) {
  std::vector<StratumTable> tables(static_cast<std::size_t>(strata.n_strata));
  for (std::size_t i = 0; i < data.n(); ++i) {
    auto& t = tables[static_cast<std::size_t>(strata.stratum[i])];
    const bool exposed = data.t_star()[i] == 1;
    if (data.y()[i] == 1)
      (exposed ? t.a_star : t.c_star) += 1;
    else
      (exposed ? t.b_star : t.d_star) += 1;
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Estimators

namespace {

std::vector<CorrectedTable> corrected_tables(std::span<const StratumTable> tables,
                                             const RecallBias& bias,
                                             const StratifiedOptions& options) {
  if (tables.empty()) throw Error(ErrorCode::Precondition, "no strata");
  std::vector<CorrectedTable> out;
  std::ostringstream infeasible;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    StratumTable t = tables[k];
    if (options.continuity_correction) {
      t.a_star += 0.5;
      t.b_star += 0.5;
      t.c_star += 0.5;
      t.d_star += 0.5;
    }
    out.push_back(correct_table(t, bias));
    if (!out.back().feasible) infeasible << (infeasible.tellp() > 0 ? ", " : "") << k + 1;
  }
  if (infeasible.tellp() > 0)
    throw Error(ErrorCode::InfeasibleBias,
                "bias parameters give negative corrected counts in strata " + infeasible.str());
  return out;
}

}  // namespace

EstimateResult stratified_marginal_cor(std::span<const StratumTable> tables, const RecallBias& bias,
                                       const StratifiedOptions& options) {
  const auto corrected = corrected_tables(tables, bias, options);
  double total = 0;
  for (const auto& c : corrected) total += c.n();
  double p1 = 0, p0 = 0;
  for (std::size_t k = 0; k < corrected.size(); ++k) {
    const auto& c = corrected[k];
    if (!(c.a + c.b > 0) || !(c.c + c.d > 0))
      throw Error(ErrorCode::EmptyStratumCell,
                  "stratum " + std::to_string(k + 1) + " has an empty corrected exposure margin");
    const double s = c.n() / total;
    p1 += s * c.a / (c.a + c.b);
    p0 += s * c.c / (c.c + c.d);
  }
  if (!(p1 > 0 && p1 < 1 && p0 > 0 && p0 < 1))
    throw Error(ErrorCode::DegenerateMarginal, "stratified risk outside (0, 1)");

  EstimateResult r;
  r.method = Method::StratUser;
  r.bias = bias;
  r.log_psi = std::log(p1 * (1 - p0)) - std::log(p0 * (1 - p1));
  r.diagnostics["p1"] = p1;
  r.diagnostics["p0"] = p0;
  r.diagnostics["n_strata"] = static_cast<double>(corrected.size());
  r.diagnostics["continuity_correction"] = options.continuity_correction ? 1 : 0;
  return r;
}

EstimateResult stratified_marginal_cor(const CaseControlData& data, const StratumAssignment& strata,
                                       const RecallBias& bias, const StratifiedOptions& options) {
  const auto tables = tabulate(data, strata);
  return stratified_marginal_cor(tables, bias, options);
}

EstimateResult mantel_haenszel_cor(std::span<const StratumTable> tables, const RecallBias& bias,
                                   const StratifiedOptions& options) {
  const auto corrected = corrected_tables(tables, bias, options);
  double num = 0, den = 0;
  for (const auto& c : corrected) {
    if (c.n() <= 0) continue;
    num += c.a * c.d / c.n();
    den += c.b * c.c / c.n();
  }
  if (!(den > 0)) throw Error(ErrorCode::ZeroDenominator, "Mantel-Haenszel denominator is zero");
  if (!(num > 0)) throw Error(ErrorCode::DegenerateMarginal, "Mantel-Haenszel numerator is zero");

  EstimateResult r;
  r.method = Method::MantelHaenszel;
  r.bias = bias;
  r.log_psi = std::log(num) - std::log(den);
  r.diagnostics["n_strata"] = static_cast<double>(corrected.size());
  r.diagnostics["targets_common_cor"] = 1;
  r.diagnostics["continuity_correction"] = options.continuity_correction ? 1 : 0;
  return r;
}

EstimateResult mantel_haenszel_cor(const CaseControlData& data, const StratumAssignment& strata,
                                   const RecallBias& bias, const StratifiedOptions& options) {
  const auto tables = tabulate(data, strata);
  return mantel_haenszel_cor(tables, bias, options);
}

EstimateResult crude_cor(const CaseControlData& data, const StratifiedOptions& options) {
  StratumAssignment single;
  single.n_strata = 1;
  single.stratum.assign(data.n(), 0);
  auto t = tabulate(data, single).front();
  if (options.continuity_correction) {
    t.a_star += 0.5;
    t.b_star += 0.5;
    t.c_star += 0.5;
    t.d_star += 0.5;
  }
  if (t.a_star <= 0 || t.b_star <= 0 || t.c_star <= 0 || t.d_star <= 0)
    throw Error(ErrorCode::EmptyStratumCell, "crude odds ratio: a cell of the 2x2 table is empty");
  EstimateResult r;
  r.method = Method::Crude;
  r.log_psi = std::log(t.a_star * t.d_star) - std::log(t.b_star * t.c_star);
  r.diagnostics["woolf_se"] =
      std::sqrt(1 / t.a_star + 1 / t.b_star + 1 / t.c_star + 1 / t.d_star);
  r.diagnostics["bias_ignored"] = 1;
  return r;
}

}  // namespace ccrecall
