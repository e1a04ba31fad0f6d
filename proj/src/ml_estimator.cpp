#include "ccrecall/ml_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include "ccrecall/glm.hpp"

namespace ccrecall {

// ---------------------------------------------------------------------------
// MlParams

double MlParams::exposure_prob(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return expit(linear_predictor(beta, x));
}

double MlParams::outcome_prob(int t, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto k = static_cast<Eigen::Index>(p());
  if (separate_outcomes) {
    const Eigen::VectorXd g = gamma.segment(t == 1 ? k + 1 : 0, k + 1);
    return expit(linear_predictor(g, x));
  }
  return expit(gamma(0) + gamma(1) * t + gamma.tail(k).dot(x));
}

std::size_t MlParams::size(std::size_t p, bool separate_outcomes) {
  return (p + 1) + (separate_outcomes ? 2 * (p + 1) : p + 2);
}

Eigen::VectorXd MlParams::pack() const {
  Eigen::VectorXd theta(beta.size() + gamma.size());
  theta << beta, gamma;
  return theta;
}

MlParams MlParams::unpack(const Eigen::VectorXd& theta, std::size_t p, bool separate_outcomes) {
  if (static_cast<std::size_t>(theta.size()) != size(p, separate_outcomes))
    throw Error(ErrorCode::InvalidArgument, "MlParams: parameter vector has the wrong size");
  MlParams out;
  const auto kb = static_cast<Eigen::Index>(p + 1);
  out.beta = theta.head(kb);
  out.gamma = theta.tail(theta.size() - kb);
  out.separate_outcomes = separate_outcomes;
  return out;
}

// ---------------------------------------------------------------------------
// Cell probabilities

namespace {

struct CellCoefficients {
  double exposed;    // weight on A_y = P(Y=y, T=1)
  double unexposed;  // weight on B_y = P(Y=y, T=0)
};

CellCoefficients cell_coefficients(int y, int t_star, const RecallBias& bias) {
  const double fp = bias.false_positive(y);
  const double fn = bias.false_negative(y);
  return t_star == 1 ? CellCoefficients{1.0 - fn, fp} : CellCoefficients{fn, 1.0 - fp};
}

}  // namespace

double joint_prob(int y, int t_star, double m1, double m0, double e, const RecallBias& bias) {
  const auto c = cell_coefficients(y, t_star, bias);
  const double a = (y == 1 ? m1 : 1.0 - m1) * e;
  const double b = (y == 1 ? m0 : 1.0 - m0) * (1.0 - e);
  return c.exposed * a + c.unexposed * b;
}

double joint_prob(int y, int t_star, const Eigen::Ref<const Eigen::VectorXd>& x,
                  const MlParams& params, const RecallBias& bias) {
  return joint_prob(y, t_star, params.outcome_prob(1, x), params.outcome_prob(0, x),
                    params.exposure_prob(x), bias);
}

// ---------------------------------------------------------------------------
// Likelihood

ObservedLikelihood::ObservedLikelihood(const CaseControlData& data, const RecallBias& bias,
                                       bool separate_outcomes)
    : bias_(bias),
      separate_(separate_outcomes),
      p_(data.p()),
      n_params_(MlParams::size(data.p(), separate_outcomes)) {
  // Collapse identical (y, t*, x) records into weighted patterns.
  const auto& X = data.x();
  std::vector<std::size_t> order(data.n());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t i, std::size_t j) {
    if (data.y()[i] != data.y()[j]) return data.y()[i] < data.y()[j];
    if (data.t_star()[i] != data.t_star()[j]) return data.t_star()[i] < data.t_star()[j];
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double a = X(static_cast<Eigen::Index>(i), c), b = X(static_cast<Eigen::Index>(j), c);
      if (a != b) return a < b;
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);

  std::vector<std::size_t> reps;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && !less(order[k - 1], order[k])) {
      weight_.back() += 1.0;
      continue;
    }
    reps.push_back(order[k]);
    y_.push_back(data.y()[order[k]]);
    t_.push_back(data.t_star()[order[k]]);
    weight_.push_back(1.0);
  }
  x_.resize(static_cast<Eigen::Index>(reps.size()), X.cols());
  for (std::size_t r = 0; r < reps.size(); ++r)
    x_.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(reps[r]));
}

bool ObservedLikelihood::evaluate(const Eigen::VectorXd& theta, double* loglik,
                                  Eigen::VectorXd* gradient) const {
  const auto k = static_cast<Eigen::Index>(p_);
  const Eigen::Index kb = k + 1;
  const Eigen::VectorXd beta = theta.head(kb);
  const Eigen::VectorXd gamma = theta.tail(theta.size() - kb);

  double ll = 0;
  if (gradient) gradient->setZero(theta.size());
  for (Eigen::Index r = 0; r < x_.rows(); ++r) {
    const auto xr = x_.row(r).transpose();
    const double e = expit(beta(0) + beta.tail(k).dot(xr));
    double m1, m0;
    if (separate_) {
      m0 = expit(gamma(0) + gamma.segment(1, k).dot(xr));
      m1 = expit(gamma(kb) + gamma.segment(kb + 1, k).dot(xr));
    } else {
      const double base = gamma(0) + gamma.tail(k).dot(xr);
      m0 = expit(base);
      m1 = expit(base + gamma(1));
    }
    const int y = y_[static_cast<std::size_t>(r)];
    const int t = t_[static_cast<std::size_t>(r)];
    const double w = weight_[static_cast<std::size_t>(r)];
    const auto c = cell_coefficients(y, t, bias_);
    const double u1 = y == 1 ? m1 : 1.0 - m1;
    const double u0 = y == 1 ? m0 : 1.0 - m0;
    const double prob = c.exposed * u1 * e + c.unexposed * u0 * (1.0 - e);
    if (!(prob > 0.0) || !std::isfinite(prob)) return false;
    ll += w * std::log(prob);
    if (!gradient) continue;

    const double sign = y == 1 ? 1.0 : -1.0;
    const double inv = w / prob;
    // d log P / d(linear predictor) for m1, m0 and e
    const double d_m1 = inv * c.exposed * sign * e * m1 * (1.0 - m1);
    const double d_m0 = inv * c.unexposed * sign * (1.0 - e) * m0 * (1.0 - m0);
    const double d_e = inv * (c.exposed * u1 - c.unexposed * u0) * e * (1.0 - e);

    auto& g = *gradient;
    g(0) += d_e;
    g.segment(1, k) += d_e * xr;
    if (separate_) {
      g(kb) += d_m0;
      g.segment(kb + 1, k) += d_m0 * xr;
      g(2 * kb) += d_m1;
      g.segment(2 * kb + 1, k) += d_m1 * xr;
    } else {
      g(kb) += d_m1 + d_m0;
      g(kb + 1) += d_m1;
      g.segment(kb + 2, k) += (d_m1 + d_m0) * xr;
    }
  }
  *loglik = ll;
  return true;
}

double ObservedLikelihood::value(const Eigen::VectorXd& theta) const {
  double ll = 0;
  if (!evaluate(theta, &ll, nullptr)) return -std::numeric_limits<double>::infinity();
  return ll;
}

double ObservedLikelihood::min_cell_prob(const Eigen::VectorXd& theta) const {
  const auto params = MlParams::unpack(theta, p_, separate_);
  double lo = 1.0;
  for (Eigen::Index r = 0; r < x_.rows(); ++r) {
    const auto xr = x_.row(r).transpose();
    lo = std::min(lo, joint_prob(y_[static_cast<std::size_t>(r)], t_[static_cast<std::size_t>(r)],
                                 xr, params, bias_));
  }
  return lo;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

class NegativeLogLik final : public ceres::FirstOrderFunction {
 public:
  explicit NegativeLogLik(const ObservedLikelihood& lik) : lik_(lik) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const auto n = static_cast<Eigen::Index>(lik_.num_parameters());
    const Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(parameters, n);
    double ll = 0;
    Eigen::VectorXd g;
    if (!lik_.evaluate(theta, &ll, gradient ? &g : nullptr)) return false;
    *cost = -ll;
    if (gradient) Eigen::Map<Eigen::VectorXd>(gradient, n) = -g;
    return true;
  }
  int NumParameters() const override { return static_cast<int>(lik_.num_parameters()); }

 private:
  const ObservedLikelihood& lik_;
};

struct StartResult {
  Eigen::VectorXd theta;
  double loglik = -std::numeric_limits<double>::infinity();
  double max_abs_gradient = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

StartResult run_start(const ObservedLikelihood& lik, Eigen::VectorXd theta, const MlOptions& opt) {
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::BFGS;
  options.max_num_iterations = opt.max_iterations;
  options.gradient_tolerance = opt.gradient_tolerance * 0.1;
  options.function_tolerance = 1e-16;
  options.parameter_tolerance = 1e-16;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;

  StartResult out;
  if (!std::isfinite(lik.value(theta))) return out;
  ceres::GradientProblem problem(new NegativeLogLik(lik));
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, theta.data(), &summary);

  double ll = 0;
  Eigen::VectorXd g;
  if (!lik.evaluate(theta, &ll, &g)) return out;
  // BFGS line searches can stall on roundoff near the optimum; finish with
  // Newton steps on a finite-difference Hessian of the analytic gradient.
  const Eigen::Index k = theta.size();
  for (int it = 0; it < 20 && g.cwiseAbs().maxCoeff() > opt.gradient_tolerance * 0.1; ++it) {
    Eigen::MatrixXd h(k, k);
    bool ok = true;
    for (Eigen::Index j = 0; j < k && ok; ++j) {
      const double step = 1e-5 * std::max(1.0, std::abs(theta(j)));
      Eigen::VectorXd up = theta, down = theta, g_up, g_down;
      up(j) += step;
      down(j) -= step;
      double unused = 0;
      ok = lik.evaluate(up, &unused, &g_up) && lik.evaluate(down, &unused, &g_down);
      if (ok) h.col(j) = (g_up - g_down) / (2 * step);
    }
    if (!ok) break;
    h = 0.5 * (h + h.transpose());
    const Eigen::VectorXd delta = h.ldlt().solve(-g);
    if (!delta.allFinite()) break;
    double ll_new = 0;
    Eigen::VectorXd g_new;
    const Eigen::VectorXd candidate = theta + delta;
    if (!lik.evaluate(candidate, &ll_new, &g_new)) break;
    if (g_new.cwiseAbs().maxCoeff() >= g.cwiseAbs().maxCoeff() && ll_new < ll) break;
    theta = candidate;
    ll = ll_new;
    g = g_new;
  }
  out.theta = theta;
  out.loglik = ll;
  out.max_abs_gradient = g.cwiseAbs().maxCoeff();
  out.iterations = static_cast<int>(summary.iterations.size());
  return out;
}

// Start from separate logistic fits that treat T* as the true exposure.
std::optional<Eigen::VectorXd> warm_start(const CaseControlData& data, bool separate) {
  const Eigen::MatrixXd design = data.design();
  Eigen::VectorXd t(static_cast<Eigen::Index>(data.n())), y(t.size());
  for (std::size_t i = 0; i < data.n(); ++i) {
    t(static_cast<Eigen::Index>(i)) = data.t_star()[i];
    y(static_cast<Eigen::Index>(i)) = data.y()[i];
  }
  try {
    const auto exposure = fit_logistic(design, t);
    if (!exposure.converged) return std::nullopt;
    Eigen::VectorXd gamma;
    if (separate) {
      gamma.resize(2 * design.cols());
      for (int arm : {0, 1}) {
        Eigen::VectorXd w(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i) w(i) = t(i) == arm ? 1.0 : 0.0;
        const auto fit = fit_logistic(design, y, w);
        if (!fit.converged) return std::nullopt;
        gamma.segment(arm * design.cols(), design.cols()) = fit.coefficients;
      }
    } else {
      Eigen::MatrixXd outcome_design(design.rows(), design.cols() + 1);
      outcome_design << design.col(0), t, design.rightCols(design.cols() - 1);
      const auto fit = fit_logistic(outcome_design, y);
      if (!fit.converged) return std::nullopt;
      gamma = fit.coefficients;
    }
    Eigen::VectorXd theta(exposure.coefficients.size() + gamma.size());
    theta << exposure.coefficients, gamma;
    return theta;
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Covariates are centred and scaled before optimization; coefficients are
// mapped back afterwards, so fitted probabilities are unaffected.
struct Standardized {
  CaseControlData data;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

Standardized standardize(const CaseControlData& data) {
  const Eigen::MatrixXd& x = data.x();
  Eigen::VectorXd mean = x.colwise().mean().transpose();
  Eigen::VectorXd scale(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt((x.col(j).array() - mean(j)).square().mean());
    scale(j) = sd > 0 ? sd : 1.0;
  }
  Eigen::MatrixXd z = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  std::vector<int> y(data.y().begin(), data.y().end()), t(data.t_star().begin(), data.t_star().end());
  return {CaseControlData(std::move(y), std::move(t), std::move(z)), std::move(mean), std::move(scale)};
}

// coef = [intercept, optional exposure term, slopes on standardized x].
void unscale(Eigen::Ref<Eigen::VectorXd> coef, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
  auto slopes = coef.tail(mean.size());
  slopes.array() /= scale.array();
  coef(0) -= slopes.dot(mean);
}

}  // namespace

MlFit fit_ml(const CaseControlData& input, const RecallBias& bias, const MlOptions& options) {
  input.require_both_outcomes();
  const auto exposed = std::count(input.t_star().begin(), input.t_star().end(), 1);
  if (exposed == 0 || static_cast<std::size_t>(exposed) == input.n())
    throw Error(ErrorCode::Precondition, "fit_ml: reported exposure is constant");

  const Standardized std_data = standardize(input);
  const CaseControlData& data = std_data.data;
  const ObservedLikelihood lik(data, bias, options.separate_outcomes);
  const auto n_params = static_cast<Eigen::Index>(lik.num_parameters());

  std::vector<Eigen::VectorXd> starts{Eigen::VectorXd::Zero(n_params)};
  if (auto warm = warm_start(data, options.separate_outcomes)) {
    starts.push_back(*warm);
    Eigen::VectorXd perturbed = *warm;
    for (Eigen::Index j = 0; j < n_params; ++j) perturbed(j) += (j % 2 == 0 ? 0.1 : -0.1);
    starts.push_back(perturbed);
  }

  MlFit best;
  best.loglik = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta;
  for (const auto& start : starts) {
    const auto r = run_start(lik, start, options);
    if (!(r.max_abs_gradient <= options.gradient_tolerance)) continue;
    ++best.starts_converged;
    if (r.loglik > best.loglik) {
      best.loglik = r.loglik;
      best.max_abs_gradient = r.max_abs_gradient;
      best.iterations = r.iterations;
      best_theta = r.theta;
    }
  }
  if (best.starts_converged == 0)
    throw Error(ErrorCode::NonConvergence, "fit_ml: no start reached the gradient tolerance");
  if (!(lik.min_cell_prob(best_theta) > 1e-300))
    throw Error(ErrorCode::DegenerateLikelihood, "fit_ml: a fitted cell probability underflows");
  best.params = MlParams::unpack(best_theta, data.p(), options.separate_outcomes);
  const auto k = static_cast<Eigen::Index>(data.p()) + 1;
  unscale(best.params.beta, std_data.mean, std_data.scale);
  if (options.separate_outcomes) {
    unscale(best.params.gamma.segment(0, k), std_data.mean, std_data.scale);
    unscale(best.params.gamma.segment(k, k), std_data.mean, std_data.scale);
  } else {
    unscale(best.params.gamma, std_data.mean, std_data.scale);
  }
  return best;
}

EstimateResult ml_marginal_cor(const CaseControlData& data, const RecallBias& bias,
                               const MlOptions& options) {
  const auto fit = fit_ml(data, bias, options);
  double p1 = 0, p0 = 0;
  for (Eigen::Index i = 0; i < data.x().rows(); ++i) {
    const auto xi = data.x().row(i).transpose();
    p1 += fit.params.outcome_prob(1, xi);
    p0 += fit.params.outcome_prob(0, xi);
  }
  p1 /= static_cast<double>(data.n());
  p0 /= static_cast<double>(data.n());
  if (!(p1 > 0 && p1 < 1 && p0 > 0 && p0 < 1))
    throw Error(ErrorCode::DegenerateMarginal, "ml_marginal_cor: marginal risk outside (0, 1)");

  EstimateResult r;
  r.method = Method::ML;
  r.bias = bias;
  r.log_psi = std::log(p1 * (1 - p0)) - std::log(p0 * (1 - p1));
  r.diagnostics["p1"] = p1;
  r.diagnostics["p0"] = p0;
  r.diagnostics["loglik"] = fit.loglik;
  r.diagnostics["iterations"] = fit.iterations;
  r.diagnostics["max_abs_gradient"] = fit.max_abs_gradient;
  r.diagnostics["starts_converged"] = fit.starts_converged;
  r.diagnostics["separate_outcomes"] = options.separate_outcomes ? 1 : 0;
  return r;
}

}  // namespace ccrecall
