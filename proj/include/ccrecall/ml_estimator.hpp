#pragma once

// Maximum likelihood for the outcome and exposure models when only the
// misreported exposure T* is observed, followed by g-computation of the
// marginal causal odds ratio.
//
// With A_y = P(Y=y, T=1 | x) and B_y = P(Y=y, T=0 | x), the observed cells are
//
//   P(Y=y, T*=1 | x) = (1 - fn_y) A_y + fp_y B_y
//   P(Y=y, T*=0 | x) = fn_y A_y + (1 - fp_y) B_y
//
// where fp_y = P(T*=1 | Y=y, T=0) (over-reporting, eta_y) and
// fn_y = P(T*=0 | Y=y, T=1) (under-reporting, zeta_y). Only one of the two is
// nonzero for a given bias direction. For over-reporting this is exactly
//   P(1,1) = m1 e + eta1 m0 (1-e),      P(1,0) = (1-eta1) m0 (1-e), ...
// and for under-reporting
//   P(1,1) = (1-zeta1) m1 e,            P(1,0) = zeta1 m1 e + m0 (1-e), ...

#include <vector>

#include <Eigen/Dense>

#include "ccrecall/data_model.hpp"

namespace ccrecall {

// Parameter layout of theta = [beta | gamma]:
//   beta  : exposure model e(x) = expit(beta0 + beta_x' x), size p+1
//   gamma : shared   m(t, x) = expit(g0 + g_t t + g_x' x), size p+2
//           separate m_t(x)  = expit(g_t0 + g_tx' x), [gamma_0 | gamma_1], size 2(p+1)
struct MlParams {
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;
  bool separate_outcomes = false;

  std::size_t p() const { return static_cast<std::size_t>(beta.size() - 1); }

  double exposure_prob(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double outcome_prob(int t, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Eigen::VectorXd pack() const;
  static MlParams unpack(const Eigen::VectorXd& theta, std::size_t p, bool separate_outcomes);
  static std::size_t size(std::size_t p, bool separate_outcomes);
};

// P(Y=y, T*=t_star | X=x) from m1, m0, e.
double joint_prob(int y, int t_star, double m1, double m0, double e, const RecallBias& bias);
double joint_prob(int y, int t_star, const Eigen::Ref<const Eigen::VectorXd>& x,
                  const MlParams& params, const RecallBias& bias);

// Observed-data log-likelihood over distinct (y, t*, x) patterns.
class ObservedLikelihood {
 public:
  ObservedLikelihood(const CaseControlData& data, const RecallBias& bias,
                     bool separate_outcomes);

  std::size_t num_parameters() const { return n_params_; }
  std::size_t num_patterns() const { return weight_.size(); }

  double value(const Eigen::VectorXd& theta) const;
  // Returns false when some cell probability is not positive.
  bool evaluate(const Eigen::VectorXd& theta, double* loglik, Eigen::VectorXd* gradient) const;
  // Smallest fitted cell probability over observed patterns.
  double min_cell_prob(const Eigen::VectorXd& theta) const;

 private:
  RecallBias bias_;
  bool separate_;
  std::size_t p_;
  std::size_t n_params_;
  Eigen::MatrixXd x_;  // distinct covariate rows
  std::vector<int> y_;
  std::vector<int> t_;
  std::vector<double> weight_;
};

struct MlOptions {
  bool separate_outcomes = false;
  double gradient_tolerance = 1e-6;
  int max_iterations = 1000;
};

struct MlFit {
  MlParams params;
  double loglik = 0;
  double max_abs_gradient = 0;
  int iterations = 0;
  int starts_converged = 0;
};

// Multi-start quasi-Newton maximization; keeps the best converged start.
MlFit fit_ml(const CaseControlData& data, const RecallBias& bias, const MlOptions& options = {});

EstimateResult ml_marginal_cor(const CaseControlData& data, const RecallBias& bias,
                               const MlOptions& options = {});

}  // namespace ccrecall
