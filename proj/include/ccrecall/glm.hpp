#pragma once

// Weighted Bernoulli-logit regression fitted by IRLS.

#include <optional>

#include <Eigen/Dense>

namespace ccrecall {

inline constexpr double kLinearPredictorClip = 30.0;

// expit with the linear predictor clipped to +/-30.
double expit(double eta);
double logit(double p);

enum class FitStatus { Converged, Separation, MaxIterations };

const char* to_string(FitStatus s);

struct LogisticFit {
  Eigen::VectorXd coefficients;  // intercept first
  bool converged = false;
  int iterations = 0;
  double max_abs_score = 0;
  FitStatus status = FitStatus::MaxIterations;
};

struct LogisticOptions {
  double tolerance = 1e-8;       // sup-norm of the score
  int max_iterations = 100;
  double divergence_norm = 30.0; // |coefficient| beyond this flags separation
};

// X carries the intercept column. Throws Precondition (y constant, n < cols,
// bad weights) or SingularDesign. Separation returns converged = false.
LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::optional<Eigen::VectorXd>& weights = std::nullopt,
                         const LogisticOptions& options = {});

// x excludes the intercept.
double linear_predictor(const Eigen::VectorXd& coefficients, const Eigen::Ref<const Eigen::VectorXd>& x);
double predict_prob(const LogisticFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x);

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const Eigen::VectorXd& beta);
Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w, const Eigen::VectorXd& beta);

}  // namespace ccrecall
