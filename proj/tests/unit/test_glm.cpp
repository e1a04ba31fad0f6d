#include <doctest.h>

#include <cmath>

#include "ccrecall/glm.hpp"
#include "test_util.hpp"

using namespace ccrecall;

TEST_CASE("expit and logit") {
  CHECK(expit(-1.0) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(expit(0.0) == 0.5);
  CHECK(expit(1000.0) == expit(30.0));
  CHECK(expit(-1000.0) > 0.0);
  CHECK(logit(expit(0.7)) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("intercept-only fit recovers the logit of the mean") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(100, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(100);
  y.head(25).setOnes();
  const auto fit = fit_logistic(X, y);
  CHECK(fit.converged);
  CHECK(fit.coefficients(0) == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-10));
  CHECK(fit.coefficients(0) == doctest::Approx(-1.0986).epsilon(1e-4));
}

TEST_CASE("saturated 2x2 fit gives the log odds ratio") {
  // (y=1,x=1)=30, (y=1,x=0)=20, (y=0,x=1)=20, (y=0,x=0)=30
  Eigen::MatrixXd X(100, 2);
  Eigen::VectorXd y(100);
  int i = 0;
  auto add = [&](double yy, double xx, int k) {
    for (int j = 0; j < k; ++j, ++i) {
      X(i, 0) = 1;
      X(i, 1) = xx;
      y(i) = yy;
    }
  };
  add(1, 1, 30);
  add(1, 0, 20);
  add(0, 1, 20);
  add(0, 0, 30);
  const auto fit = fit_logistic(X, y);
  CHECK(fit.coefficients(1) == doctest::Approx(std::log(900.0 / 400.0)).epsilon(1e-10));
  CHECK(fit.coefficients(1) == doctest::Approx(0.8109).epsilon(1e-4));

  // frequency weights give the same answer on the four distinct rows
  Eigen::MatrixXd Xw(4, 2);
  Xw << 1, 1, 1, 0, 1, 1, 1, 0;
  Eigen::VectorXd yw(4), w(4);
  yw << 1, 1, 0, 0;
  w << 30, 20, 20, 30;
  const auto fw = fit_logistic(Xw, yw, w);
  CHECK((fw.coefficients - fit.coefficients).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("score vanishes at the fit and matches finite differences") {
  const auto d = testing::random_dataset(3, 400, 3);
  const Eigen::MatrixXd X = d.design();
  Eigen::VectorXd y(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) y(i) = d.y()[i];
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(y.size());
  const auto fit = fit_logistic(X, y);
  REQUIRE(fit.converged);
  CHECK(logistic_score(X, y, w, fit.coefficients).cwiseAbs().maxCoeff() < 1e-8);

  Eigen::VectorXd beta(4);
  beta << 0.2, -0.3, 0.5, 0.1;
  const auto g = logistic_score(X, y, w, beta);
  for (int j = 0; j < 4; ++j) {
    Eigen::VectorXd up = beta, down = beta;
    up(j) += 1e-6;
    down(j) -= 1e-6;
    const double fd = (logistic_loglik(X, y, w, up) - logistic_loglik(X, y, w, down)) / 2e-6;
    CHECK(fd == doctest::Approx(g(j)).epsilon(1e-5));
  }
}

TEST_CASE("fit failures") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  const auto sep = fit_logistic(X, y);
  CHECK_FALSE(sep.converged);
  CHECK(sep.status == FitStatus::Separation);

  Eigen::VectorXd constant = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_AS(fit_logistic(X, constant), Error);

  Eigen::MatrixXd collinear(4, 3);
  collinear << 1, 0, 0, 1, 1, 2, 1, 2, 4, 1, 3, 6;
  y << 0, 1, 0, 1;
  try {
    fit_logistic(collinear, y);
    FAIL("expected SingularDesign");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularDesign);
  }
}

TEST_CASE("prediction") {
  Eigen::VectorXd coef(3);
  coef << -1, 0.5, 2;
  Eigen::VectorXd x(2);
  x << 2, 0;
  CHECK(linear_predictor(coef, x) == doctest::Approx(0.0));
  LogisticFit f;
  f.coefficients = coef;
  x << 0, 0;
  CHECK(predict_prob(f, x) == doctest::Approx(0.26894).epsilon(1e-5));
}
