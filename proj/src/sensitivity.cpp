#include "ccrecall/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "ccrecall/glm.hpp"
#include "ccrecall/parallel.hpp"
#include "ccrecall/rng.hpp"

namespace ccrecall {

const char* to_string(CiType t) {
  return t == CiType::NormalLog ? "normal-log" : "percentile";
}

namespace {

double type7_quantile(std::vector<double> v, double prob) {
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Sample standard deviation computed on values shifted by the first one, so
// identical inputs give exactly zero.
double sample_sd(const std::vector<double>& v) {
  const double shift = v.front();
  double s = 0, ss = 0;
  for (double x : v) {
    s += x - shift;
    ss += (x - shift) * (x - shift);
  }
  const double n = static_cast<double>(v.size());
  return std::sqrt(std::max(0.0, (ss - s * s / n) / (n - 1)));
}

}  // namespace

EstimateResult bootstrap_ci(const CaseControlData& data, const MethodSpec& spec,
                            const RecallBias& bias, const BootstrapOptions& options) {
  if (options.n_boot < 2) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 2 resamples");
  if (!(options.level > 0 && options.level < 1))
    throw Error(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");

  EstimateResult result = estimate(data, spec, bias);

  const auto n_boot = static_cast<std::size_t>(options.n_boot);
  std::vector<double> draws(n_boot, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> reasons(n_boot);
  parallel_for(n_boot, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b));
    std::vector<std::size_t> rows(data.n());
    for (auto& r : rows) r = rng.index(data.n());
    try {
      draws[b] = estimate(data.subset(rows), spec, bias).log_psi;
    } catch (const Error& e) {
      reasons[b] = std::string(to_string(e.code())) + ": " + e.what();
    }
  });

  std::vector<double> ok;
  for (double d : draws)
    if (std::isfinite(d)) ok.push_back(d);
  const std::size_t failed = n_boot - ok.size();
  if (static_cast<double>(failed) > options.max_failure_fraction * static_cast<double>(n_boot) ||
      ok.size() < 2) {
    const auto first = std::find_if(reasons.begin(), reasons.end(), [](const auto& r) { return !r.empty(); });
    throw Error(ErrorCode::TooManyFailedResamples,
                std::to_string(failed) + " of " + std::to_string(n_boot) + " bootstrap resamples failed" +
                    (first != reasons.end() ? " (first: " + *first + ")" : ""));
  }

  const double se = sample_sd(ok);
  result.se_log_psi = se;
  const double tail = (1.0 - options.level) / 2.0;
  if (options.ci == CiType::NormalLog) {
    const double z = boost::math::quantile(boost::math::normal(), 1.0 - tail);
    result.ci_low = std::exp(result.log_psi - z * se);
    result.ci_high = std::exp(result.log_psi + z * se);
  } else {
    result.ci_low = std::exp(type7_quantile(ok, tail));
    result.ci_high = std::exp(type7_quantile(ok, 1.0 - tail));
  }
  result.diagnostics["n_boot"] = static_cast<double>(n_boot);
  result.diagnostics["failed_resamples"] = static_cast<double>(failed);
  result.diagnostics["level"] = options.level;
  return result;
}

bool is_significant(const EstimateResult& r) {
  if (!r.has_ci()) throw Error(ErrorCode::InvalidArgument, "significance needs a confidence interval");
  return *r.ci_low > 1.0 || *r.ci_high < 1.0;
}

// ---------------------------------------------------------------------------
// Grids

std::vector<double> grid_axis(double lo, double hi, double step) {
  if (!(step > 0) || hi < lo) throw Error(ErrorCode::InvalidArgument, "grid axis needs lo <= hi and step > 0");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= count; ++k) out.push_back(lo + static_cast<double>(k) * step);
  return out;
}

double method_feasibility_bound(const CaseControlData& data, const MethodSpec& spec,
                                const RecallBias& bias, int which) {
  const auto strata = strata_for(data, spec, bias);
  double bound = 1.0;
  for (const auto& t : tabulate(data, strata))
    bound = std::min(bound, feasibility_bound(t, bias.direction(), which));
  return bound;
}

SensitivityGrid sensitivity_scan(const CaseControlData& data, const MethodSpec& spec,
                                 BiasDirection direction, const GridSpec& grid,
                                 const BootstrapOptions& options) {
  if (direction == BiasDirection::None)
    throw Error(ErrorCode::InvalidArgument, "sensitivity scan needs a bias direction");
  SensitivityGrid out;
  out.direction = direction;
  out.axis0 = grid.axis0;
  out.axis1 = grid.constrained_equal ? grid.axis0 : grid.axis1;
  out.constrained_equal = grid.constrained_equal;

  if (grid.constrained_equal) {
    for (double v : grid.axis0) out.cells.push_back({v, v, CellStatus::Ok, std::nullopt, {}});
  } else {
    for (double v0 : grid.axis0)
      for (double v1 : grid.axis1) out.cells.push_back({v0, v1, CellStatus::Ok, std::nullopt, {}});
  }

  for (std::size_t k = 0; k < out.cells.size(); ++k) {
    auto& cell = out.cells[k];
    try {
      const RecallBias bias(direction, cell.theta0, cell.theta1);
      // Strata do not depend on the bias values within a direction, so one
      // feasibility check on the original tables decides the cell.
      const auto strata = strata_for(data, spec, bias);
      bool feasible = true;
      for (const auto& t : tabulate(data, strata))
        feasible = feasible && cell.theta0 <= feasibility_bound(t, direction, 0) &&
                   cell.theta1 <= feasibility_bound(t, direction, 1);
      if (!feasible) {
        cell.status = CellStatus::Infeasible;
        cell.message = "corrected counts would be negative";
        continue;
      }
      BootstrapOptions cell_options = options;
      cell_options.seed = derive_seed(options.seed, k);
      cell.result = bootstrap_ci(data, spec, bias, cell_options);
    } catch (const Error& e) {
      cell.status = e.code() == ErrorCode::InfeasibleBias ? CellStatus::Infeasible : CellStatus::Failed;
      cell.message = e.what();
    }
  }
  return out;
}

void write_grid_csv(std::ostream& out, const SensitivityGrid& grid) {
  const char* prefix = grid.direction == BiasDirection::OverReporting ? "eta" : "zeta";
  out << prefix << "0," << prefix << "1,psi,log_psi,ci_low,ci_high,feasible,status\n";
  out << std::setprecision(10);
  for (const auto& c : grid.cells) {
    out << c.theta0 << ',' << c.theta1 << ',';
    if (c.result) {
      out << c.result->psi() << ',' << c.result->log_psi << ',';
      if (c.result->has_ci())
        out << *c.result->ci_low << ',' << *c.result->ci_high << ',';
      else
        out << "NA,NA,";
    } else {
      out << "NA,NA,NA,NA,";
    }
    out << (c.status == CellStatus::Infeasible ? "false" : "true") << ','
        << (c.status == CellStatus::Ok ? "ok" : c.status == CellStatus::Infeasible ? "infeasible" : "failed")
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// R-factor

RFactorResult r_factor(const CaseControlData& data, const MethodSpec& spec,
                       BiasDirection direction, const RFactorOptions& options) {
  if (direction == BiasDirection::None)
    throw Error(ErrorCode::InvalidArgument, "R-factor needs a bias direction");
  if (options.varied != 0 && options.varied != 1)
    throw Error(ErrorCode::InvalidArgument, "varied parameter must be 0 (control) or 1 (case)");
  if (!(options.scan_step > 0) || !(options.bracket_width > 0))
    throw Error(ErrorCode::InvalidArgument, "scan step and bracket width must be positive");

  RFactorResult out;
  out.varied = options.varied;
  out.fixed_other = options.fixed_other;
  out.alpha = options.alpha;

  BootstrapOptions boot = options.boot;
  boot.level = 1.0 - options.alpha;
  const RecallBias base = options.varied == 1 ? RecallBias(direction, options.fixed_other, 0.0)
                                              : RecallBias(direction, 0.0, options.fixed_other);
  auto significant_at = [&](double v) {
    ++out.evaluations;
    return is_significant(bootstrap_ci(data, spec, base.with(options.varied, v), boot));
  };

  out.initial_significant = significant_at(0.0);
  const double bound = std::min(method_feasibility_bound(data, spec, base, options.varied),
                                1.0 - 1e-9);

  double previous = 0.0;
  for (long k = 1;; ++k) {
    const double v = static_cast<double>(k) * options.scan_step;
    if (v > bound) break;
    bool flipped = false;
    try {
      flipped = significant_at(v) != out.initial_significant;
    } catch (const Error& e) {
      out.note = "stopped at " + std::to_string(v) + ": " + e.what();
      break;
    }
    out.scanned_up_to = v;
    if (!flipped) {
      previous = v;
      continue;
    }
    double lo = previous, hi = v;
    while (hi - lo > options.bracket_width) {
      const double mid = 0.5 * (lo + hi);
      if (significant_at(mid) != out.initial_significant)
        hi = mid;
      else
        lo = mid;
    }
    out.bracket_low = lo;
    out.bracket_high = hi;
    out.value = 0.5 * (lo + hi);
    return out;
  }
  if (out.note.empty()) out.note = "no flip below the feasibility bound";
  return out;
}

// ---------------------------------------------------------------------------
// Ordering conditions

const char* to_string(Ordering o) {
  switch (o) {
    case Ordering::PsiLeStar: return "psi_le_psi_star";
    case Ordering::PsiGeStar: return "psi_ge_psi_star";
    case Ordering::Equal: return "indeterminate-at-equality";
    case Ordering::Unknown: return "unknown";
  }
  return "unknown";
}

Ordering check_ordering_conditional(double q1_star, double q0_star, const RecallBias& bias,
                                    double tolerance) {
  if (!(q1_star >= 0 && q1_star <= 1 && q0_star >= 0 && q0_star <= 1))
    throw Error(ErrorCode::InvalidArgument, "q* values must be probabilities");
  switch (bias.direction()) {
    case BiasDirection::None:
      return Ordering::Equal;
    case BiasDirection::OverReporting: {
      // psi <= psi*  <=>  q1* eta0 <= q0* eta1
      const double diff = q1_star * bias.theta_control() - q0_star * bias.theta_case();
      if (std::abs(diff) <= tolerance) return Ordering::Equal;
      return diff < 0 ? Ordering::PsiLeStar : Ordering::PsiGeStar;
    }
    case BiasDirection::UnderReporting: {
      // psi <= psi*  <=>  (1 - q1*) zeta0 >= (1 - q0*) zeta1
      const double diff =
          (1 - q1_star) * bias.theta_control() - (1 - q0_star) * bias.theta_case();
      if (std::abs(diff) <= tolerance) return Ordering::Equal;
      return diff > 0 ? Ordering::PsiLeStar : Ordering::PsiGeStar;
    }
  }
  return Ordering::Unknown;
}

Ordering check_ordering_marginal(double psi_x_min, double psi_x_max, const RecallBias& bias) {
  if (!(psi_x_min > 0 && psi_x_min <= psi_x_max))
    throw Error(ErrorCode::InvalidArgument, "need 0 < min psi(x) <= max psi(x)");
  if (bias.direction() == BiasDirection::None || bias.is_zero()) return Ordering::Equal;

  const double inf = std::numeric_limits<double>::infinity();
  bool le = false, ge = false;
  if (bias.direction() == BiasDirection::OverReporting) {
    const double eta0 = bias.theta_control(), eta1 = bias.theta_case();
    const double ratio = eta0 == 0 ? inf : eta1 / eta0;
    le = eta0 <= eta1 && psi_x_max <= ratio;
    ge = eta0 >= eta1 && psi_x_min >= ratio;
  } else {
    const double zeta0 = bias.theta_control(), zeta1 = bias.theta_case();
    const double ratio = zeta1 == 0 ? inf : zeta0 / zeta1;
    ge = zeta0 <= zeta1 && psi_x_min >= ratio;
    le = zeta0 >= zeta1 && psi_x_max <= ratio;
  }
  if (le && ge) return Ordering::Equal;
  if (le) return Ordering::PsiLeStar;
  if (ge) return Ordering::PsiGeStar;
  return Ordering::Unknown;
}

ConditionalOrderingSummary check_conditions_on_data(const CaseControlData& data,
                                                    const RecallBias& bias) {
  data.require_both_outcomes();
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto p = static_cast<Eigen::Index>(data.p());
  Eigen::MatrixXd design(n, p + 2);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = data.y()[static_cast<std::size_t>(i)];
    t(i) = data.t_star()[static_cast<std::size_t>(i)];
  }
  design.rightCols(p) = data.x();
  const auto fit = fit_logistic(design, t);
  if (!fit.converged)
    throw Error(ErrorCode::NonConvergence, "q* model did not converge");

  ConditionalOrderingSummary out;
  out.beta_y = fit.coefficients(1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double base = fit.coefficients(0) + fit.coefficients.tail(p).dot(data.x().row(i).transpose());
    const double q1 = expit(base + out.beta_y);
    const double q0 = expit(base);
    switch (check_ordering_conditional(q1, q0, bias)) {
      case Ordering::PsiLeStar: ++out.le; break;
      case Ordering::PsiGeStar: ++out.ge; break;
      default: ++out.equal; break;
    }
  }
  return out;
}

}  // namespace ccrecall
