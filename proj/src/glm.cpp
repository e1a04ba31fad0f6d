#include "ccrecall/glm.hpp"

#include <algorithm>
#include <cmath>

#include "ccrecall/data_model.hpp"

namespace ccrecall {

double expit(double eta) {
  eta = std::clamp(eta, -kLinearPredictorClip, kLinearPredictorClip);
  return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

double logit(double p) { return std::log(p / (1.0 - p)); }

const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Converged: return "converged";
    case FitStatus::Separation: return "separation";
    case FitStatus::MaxIterations: return "max-iterations";
  }
  return "unknown";
}

namespace {

// log(1 + exp(eta)) on the clipped predictor.
double log1p_exp(double eta) {
  eta = std::clamp(eta, -kLinearPredictorClip, kLinearPredictorClip);
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

}  // namespace

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double e = std::clamp(eta(i), -kLinearPredictorClip, kLinearPredictorClip);
    ll += w(i) * (y(i) * e - log1p_exp(e));
  }
  return ll;
}

Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd r(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) r(i) = w(i) * (y(i) - expit(eta(i)));
  return X.transpose() * r;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::optional<Eigen::VectorXd>& weights,
                         const LogisticOptions& options) {
  const Eigen::Index n = X.rows(), k = X.cols();
  if (y.size() != n) throw Error(ErrorCode::InvalidArgument, "fit_logistic: y length mismatch");
  const Eigen::VectorXd w = weights.value_or(Eigen::VectorXd::Ones(n));
  if (w.size() != n || (w.array() < 0).any() || !w.allFinite())
    throw Error(ErrorCode::Precondition, "fit_logistic: weights must be finite and nonnegative");
  if (n < k) throw Error(ErrorCode::Precondition, "fit_logistic: fewer records than coefficients");

  double w_pos = 0, w_tot = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0)
      throw Error(ErrorCode::Precondition, "fit_logistic: response must be binary");
    w_pos += w(i) * y(i);
    w_tot += w(i);
  }
  if (w_pos <= 0 || w_pos >= w_tot)
    throw Error(ErrorCode::Precondition, "fit_logistic: response is constant");

  {
    const Eigen::MatrixXd gram = X.transpose() * w.asDiagonal() * X;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    lu.setThreshold(1e-10);
    if (lu.rank() < k) throw Error(ErrorCode::SingularDesign, "fit_logistic: design is rank deficient");
  }

  LogisticFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double ll = logistic_loglik(X, y, w, beta);

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd p(n), v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = expit(eta(i));
      v(i) = w(i) * p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd score = X.transpose() * (w.array() * (y - p).array()).matrix();
    fit.iterations = iter;
    fit.max_abs_score = score.cwiseAbs().maxCoeff();
    if (fit.max_abs_score <= options.tolerance) {
      fit.status = FitStatus::Converged;
      fit.converged = true;
      break;
    }
    if (beta.cwiseAbs().maxCoeff() > options.divergence_norm) {
      fit.status = FitStatus::Separation;
      break;
    }
    if (iter == options.max_iterations) break;

    const Eigen::MatrixXd info = X.transpose() * v.asDiagonal() * X;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step = ldlt.solve(score);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      fit.status = FitStatus::Separation;
      break;
    }
    // Step halving on likelihood decrease.
    double ll_new = logistic_loglik(X, y, w, beta + step);
    for (int h = 0; h < 30 && ll_new < ll - 1e-12 * std::abs(ll); ++h) {
      step *= 0.5;
      ll_new = logistic_loglik(X, y, w, beta + step);
    }
    beta += step;
    ll = ll_new;
  }
  fit.coefficients = beta;
  return fit;
}

double linear_predictor(const Eigen::VectorXd& coefficients,
                        const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (coefficients.size() != x.size() + 1)
    throw Error(ErrorCode::InvalidArgument, "linear_predictor: dimension mismatch");
  return coefficients(0) + coefficients.tail(x.size()).dot(x);
}

double predict_prob(const LogisticFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return expit(linear_predictor(fit.coefficients, x));
}

}  // namespace ccrecall
