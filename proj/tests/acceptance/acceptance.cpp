// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Tolerances are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccrecall/cli.hpp"
#include "ccrecall/estimators.hpp"
#include "ccrecall/glm.hpp"
#include "ccrecall/ml_estimator.hpp"
#include "ccrecall/rng.hpp"
#include "ccrecall/sensitivity.hpp"
#include "ccrecall/simulation.hpp"
#include "ccrecall/stratification.hpp"

using namespace ccrecall;

namespace {

constexpr double kTable2Tolerance = 0.05;
constexpr int kTable2Reps = 2000;
constexpr double kRFactorLow = 0.03, kRFactorHigh = 0.10;
constexpr int kRFactorDatasets = 20;
constexpr int kRFactorBoot = 500;
constexpr double kZeroBiasTolerance = 1e-6;
constexpr int kMonotoneCases = 1000;
constexpr double kMarginTolerance = 1e-9;
constexpr double kNormalizationTolerance = 1e-12;
constexpr double kGradientTolerance = 1e-5;
constexpr int kOrderingInstances = 500;
constexpr double kOrderingBand = 1e-9;

struct Outcome {
  bool pass;
  std::string detail;
};

double normal_draw(Rng& rng) {
  const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

CaseControlData random_dataset(std::uint64_t seed, int n, int p) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, p);
  std::vector<int> y(n), t(n);
  std::vector<double> b(p + 1), g(p + 2);
  for (auto& v : b) v = rng.uniform() - 0.5;
  for (auto& v : g) v = rng.uniform() - 0.5;
  for (int i = 0; i < n; ++i) {
    double eb = b[0], eg = g[0];
    for (int j = 0; j < p; ++j) {
      x(i, j) = normal_draw(rng);
      eb += b[j + 1] * x(i, j);
      eg += g[j + 2] * x(i, j);
    }
    t[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eb)));
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-(eg + g[1] * t[i]))));
  }
  return CaseControlData(std::move(y), std::move(t), std::move(x));
}

// ---------------------------------------------------------------------------

Outcome table2() {
  // Crude, ML, S_prop, S_prog
  const std::map<std::string, std::vector<std::array<double, 4>>> expected{
      {"(cor, cor)", {{0.591, -0.001, 0.115, 0.040}, {0.919, 0.360, 0.477, 0.400}, {1.226, 0.704, 0.827, 0.740}}},
      {"(mis, mis)", {{0.262, -0.056, -0.168, -0.003}, {0.536, 0.250, 0.151, 0.297}, {0.792, 0.543, 0.467, 0.584}}},
  };
  std::vector<SimulationScenario> scenarios;
  for (const auto& s : table2_scenarios(2000, kTable2Reps, 20240101))
    if (expected.count(s.name)) scenarios.push_back(s);
  const auto rows = run_study(scenarios, {MethodSpec{Method::ML}, MethodSpec{Method::StratPropensity},
                                          MethodSpec{Method::StratPrognostic}});
  std::map<std::string, int> seen;
  double worst = 0;
  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(3);
  int failures = 0;
  for (const auto& r : rows) {
    const auto& target = expected.at(r.scenario)[seen[r.scenario]++];
    detail << "\n    " << r.scenario << " true " << r.true_log_cor << ":";
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& e = r.estimators[k];
      const double diff = std::abs(e.mean_log_psi - target[k]);
      worst = std::max(worst, diff);
      failures += e.failed;
      detail << ' ' << study_column(e.spec.method) << ' ' << e.mean_log_psi << " (paper " << target[k] << ")";
    }
  }
  std::ostringstream head;
  head << "max |diff| " << worst << " vs tol " << kTable2Tolerance << ", " << kTable2Reps
       << " reps, failed fits " << failures;
  return {worst <= kTable2Tolerance, head.str() + detail.str()};
}

Outcome rfactor() {
  MethodSpec spec;
  spec.method = Method::StratUser;  // single stratum, no covariates
  double sum = 0;
  int found = 0;
  std::ostringstream values;
  values.precision(4);
  for (int k = 0; k < kRFactorDatasets; ++k) {
    const auto sim = simulate_null_dataset(NullDesign{}, derive_seed(606, k));
    RFactorOptions opt;
    opt.varied = 1;
    opt.boot.n_boot = kRFactorBoot;
    opt.boot.seed = derive_seed(707, k);
    const auto r = r_factor(sim.data, spec, BiasDirection::OverReporting, opt);
    if (r.value) {
      sum += *r.value;
      ++found;
      values << ' ' << *r.value;
    } else {
      values << " NotFound";
    }
  }
  const double mean = found ? sum / found : NAN;
  std::ostringstream d;
  d.precision(4);
  d << "mean R-factor " << mean << " over " << found << "/" << kRFactorDatasets << " datasets, target ["
    << kRFactorLow << ", " << kRFactorHigh << "];" << values.str();
  return {found == kRFactorDatasets && mean >= kRFactorLow && mean <= kRFactorHigh, d.str()};
}

double reference_g_computation(const CaseControlData& d) {
  const auto n = static_cast<Eigen::Index>(d.n());
  Eigen::MatrixXd X(n, d.p() + 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1;
    X(i, 1) = d.t_star()[i];
    X.row(i).tail(d.p()) = d.x().row(i);
    y(i) = d.y()[i];
  }
  const auto fit = fit_logistic(X, y);
  double p1 = 0, p0 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd r = X.row(i);
    r(1) = 1;
    p1 += 1.0 / (1.0 + std::exp(-r.dot(fit.coefficients)));
    r(1) = 0;
    p0 += 1.0 / (1.0 + std::exp(-r.dot(fit.coefficients)));
  }
  p1 /= n;
  p0 /= n;
  return std::log(p1 / (1 - p1)) - std::log(p0 / (1 - p0));
}

// Weighted stratum risks computed straight from the records.
double reference_stratified(const CaseControlData& d, const std::vector<int>& stratum, int k) {
  std::vector<double> n(k), exposed(k), exposed_cases(k), unexposed(k), unexposed_cases(k);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const int s = stratum[i];
    n[s] += 1;
    if (d.t_star()[i]) {
      exposed[s] += 1;
      exposed_cases[s] += d.y()[i];
    } else {
      unexposed[s] += 1;
      unexposed_cases[s] += d.y()[i];
    }
  }
  double p1 = 0, p0 = 0;
  for (int s = 0; s < k; ++s) {
    p1 += n[s] / d.n() * exposed_cases[s] / exposed[s];
    p0 += n[s] / d.n() * unexposed_cases[s] / unexposed[s];
  }
  return std::log(p1 / (1 - p1)) - std::log(p0 / (1 - p0));
}

Outcome zero_bias() {
  double worst_ml = 0, worst_s = 0;
  for (int k = 0; k < 20; ++k) {
    const auto d = random_dataset(derive_seed(11, k), 1000, 1 + k % 4);
    worst_ml = std::max(worst_ml, std::abs(ml_marginal_cor(d, RecallBias::none()).log_psi -
                                           reference_g_computation(d)));
    const auto strata = build_strata(d, k % 2 ? StrataScore::Propensity : StrataScore::Prognostic, 5,
                                     RecallBias::none());
    worst_s = std::max(worst_s, std::abs(stratified_marginal_cor(d, strata, RecallBias::none()).log_psi -
                                         reference_stratified(d, strata.stratum, strata.n_strata)));
  }
  std::ostringstream det;
  det << "max |diff| ML " << worst_ml << ", stratified " << worst_s << " on 20 datasets, tol "
      << kZeroBiasTolerance;
  return {worst_ml <= kZeroBiasTolerance && worst_s <= kZeroBiasTolerance, det.str()};
}

StratumTable random_table(Rng& rng) {
  return {double(1 + rng.index(200)), double(1 + rng.index(200)), double(1 + rng.index(200)),
          double(1 + rng.index(200))};
}

Outcome monotonicity() {
  Rng rng(4242);
  int cases = 0, violations = 0, comparisons = 0;
  while (cases < kMonotoneCases) {
    std::vector<StratumTable> tables;
    const int k = 1 + static_cast<int>(rng.index(5));
    for (int i = 0; i < k; ++i) tables.push_back(random_table(rng));
    const auto dir = rng.bernoulli(0.5) ? BiasDirection::OverReporting : BiasDirection::UnderReporting;
    double b0 = 1, b1 = 1;
    for (const auto& t : tables) {
      b0 = std::min(b0, feasibility_bound(t, dir, 0));
      b1 = std::min(b1, feasibility_bound(t, dir, 1));
    }
    // strictly inside the feasible region so every corrected margin is positive
    b0 = std::min(0.999 * b0, 0.99);
    b1 = std::min(0.999 * b1, 0.99);
    const int which = static_cast<int>(rng.index(2));
    const double other = (which == 0 ? b1 : b0) * rng.uniform();
    const double hi = which == 0 ? b0 : b1;
    auto psi = [&](double v) {
      const RecallBias bias = which == 0 ? RecallBias(dir, v, other) : RecallBias(dir, other, v);
      return stratified_marginal_cor(tables, bias).psi();
    };
    // over: up in eta0, down in eta1; under: down in zeta0, up in zeta1
    const bool increasing = (dir == BiasDirection::OverReporting) == (which == 0);
    std::vector<double> values;
    try {
      for (int s = 0; s <= 10; ++s) values.push_back(psi(hi * s / 10.0));
    } catch (const Error&) {
      continue;  // degenerate pooled risk; not a feasible pair
    }
    ++cases;
    for (std::size_t s = 1; s < values.size(); ++s) {
      ++comparisons;
      if (increasing ? !(values[s - 1] <= values[s]) : !(values[s - 1] >= values[s])) ++violations;
    }
  }
  std::ostringstream det;
  det << violations << " violations in " << comparisons << " comparisons over " << cases
      << " random (tables, bias) cases";
  return {violations == 0 && cases >= kMonotoneCases, det.str()};
}

Outcome margins() {
  Rng rng(5151);
  double worst = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto t = random_table(rng);
    const double t0 = 0.999 * rng.uniform(), t1 = 0.999 * rng.uniform();
    const auto dir = k % 2 ? BiasDirection::OverReporting : BiasDirection::UnderReporting;
    const auto c = correct_table(t, RecallBias(dir, t0, t1));
    worst = std::max({worst, std::abs(c.a + c.c - t.cases()), std::abs(c.b + c.d - t.controls())});
  }
  std::ostringstream det;
  det << "max margin error " << worst << " over 10000 tables, both directions, tol " << kMarginTolerance;
  return {worst <= kMarginTolerance, det.str()};
}

Outcome likelihood() {
  Rng rng(6161);
  double worst_norm = 0, worst_grad = 0;
  for (int k = 0; k < 100; ++k) {
    const int p = 1 + static_cast<int>(rng.index(3));
    const bool separate = k % 3 == 0;
    const double t0 = 0.9 * rng.uniform(), t1 = 0.9 * rng.uniform();
    const auto bias = k % 2 ? RecallBias::over(t0, t1) : RecallBias::under(t0, t1);
    const auto d = random_dataset(derive_seed(17, k), 200, p);
    const ObservedLikelihood lik(d, bias, separate);
    Eigen::VectorXd theta(lik.num_parameters());
    for (auto& v : theta) v = 3 * rng.uniform() - 1.5;
    const auto params = MlParams::unpack(theta, p, separate);

    Eigen::VectorXd x(p);
    for (auto& v : x) v = 2 * normal_draw(rng);
    double sum = 0;
    for (int y : {0, 1})
      for (int t : {0, 1}) sum += joint_prob(y, t, x, params, bias);
    worst_norm = std::max(worst_norm, std::abs(sum - 1.0));

    double ll = 0;
    Eigen::VectorXd g;
    lik.evaluate(theta, &ll, &g);
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double h = 1e-6;
      Eigen::VectorXd up = theta, down = theta;
      up(j) += h;
      down(j) -= h;
      const double fd = (lik.value(up) - lik.value(down)) / (2 * h);
      worst_grad = std::max(worst_grad, std::abs(fd - g(j)) / std::max(1.0, std::abs(g(j))));
    }
  }
  std::ostringstream det;
  det << "max |sum-1| " << worst_norm << " (tol " << kNormalizationTolerance << "), max relative gradient error "
      << worst_grad << " (tol " << kGradientTolerance << ") at 100 points";
  return {worst_norm <= kNormalizationTolerance && worst_grad <= kGradientTolerance, det.str()};
}

Outcome ordering() {
  Rng rng(7171);
  int agree = 0, compared = 0, skipped = 0;
  for (int k = 0; k < kOrderingInstances; ++k) {
    // full joint distribution of (Y, T, T*) at one covariate value
    const double m1 = 0.01 + 0.98 * rng.uniform(), m0 = 0.01 + 0.98 * rng.uniform();
    const double e = 0.01 + 0.98 * rng.uniform();
    const double t0 = 0.95 * rng.uniform(), t1 = 0.95 * rng.uniform();
    const bool over = rng.bernoulli(0.5);
    double joint[2][2][2] = {};  // [y][t][t*]
    for (int t : {0, 1}) {
      const double pt = t ? e : 1 - e;
      for (int y : {0, 1}) {
        const double py = t ? (y ? m1 : 1 - m1) : (y ? m0 : 1 - m0);
        const double theta = y ? t1 : t0;
        double report1;  // P(T*=1 | y, t)
        if (over)
          report1 = t ? 1.0 : theta;
        else
          report1 = t ? 1.0 - theta : 0.0;
        joint[y][t][1] = pt * py * report1;
        joint[y][t][0] = pt * py * (1 - report1);
      }
    }
    auto cell = [&](int y, int t) { return joint[y][t][0] + joint[y][t][1]; };
    auto cell_star = [&](int y, int ts) { return joint[y][0][ts] + joint[y][1][ts]; };
    const double log_psi = std::log(cell(1, 1) * cell(0, 0) / (cell(1, 0) * cell(0, 1)));
    const double log_psi_star =
        std::log(cell_star(1, 1) * cell_star(0, 0) / (cell_star(1, 0) * cell_star(0, 1)));
    if (std::abs(log_psi - log_psi_star) <= kOrderingBand) {
      ++skipped;
      continue;
    }
    const double q1 = cell_star(1, 1) / (cell_star(1, 0) + cell_star(1, 1));
    const double q0 = cell_star(0, 1) / (cell_star(0, 0) + cell_star(0, 1));
    const auto bias = over ? RecallBias::over(t0, t1) : RecallBias::under(t0, t1);
    const auto verdict = check_ordering_conditional(q1, q0, bias);
    const auto truth = log_psi < log_psi_star ? Ordering::PsiLeStar : Ordering::PsiGeStar;
    ++compared;
    agree += verdict == truth;
  }
  std::ostringstream det;
  det << agree << "/" << compared << " verdicts agree with brute force (" << skipped << " inside the "
      << kOrderingBand << " band)";
  return {agree == compared && compared > 0, det.str()};
}

int cli(const std::vector<std::string>& args, std::string* out) {
  std::vector<std::string> full{"ccrecall"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream o, e;
  const int code = run_cli(full, o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "%s", e.str().c_str());
  return code;
}

Outcome end_to_end() {
  const std::string input = std::string(CCRECALL_TEST_DATA_DIR) + "/synthetic_survey.csv";
  const auto data = load_csv(input, {});
  std::ostringstream det;
  bool ok = data.p() == 7 && data.n_cases() * 10 == data.n();
  det << "n " << data.n() << ", p " << data.p() << ", cases " << data.n_cases();

  std::string out;
  for (const std::string method : {"ml", "strat-prognostic", "mh"}) {
    ok = ok && cli({"estimate", "--input", input, "--method", method, "--under-report", "0.05,0.05", "--boot",
                    "500", "--seed", "1"},
                   &out) == 0;
    if (!ok) break;
    const auto j = nlohmann::json::parse(out);
    const double lo = j["ci"][0], hi = j["ci"][1], psi = j["psi"];
    ok = ok && lo < psi && psi < hi && lo > 1.0;
    det << "; " << method << " psi " << psi << " [" << lo << ", " << hi << "]";
  }

  const auto dir = std::filesystem::temp_directory_path() / "ccrecall_acceptance";
  std::filesystem::create_directories(dir);
  const auto grid_path = (dir / "grid.csv").string();
  ok = ok && cli({"sensitivity", "--input", input, "--method", "ml", "--grid", "0:0.5:0.1", "--diagonal",
                  "--boot", "100", "--seed", "2", "--out", grid_path},
                 nullptr) == 0;
  if (ok) {
    std::ifstream f(grid_path);
    std::string line;
    int rows = 0, feasible = 0;
    while (std::getline(f, line))
      if (!line.empty() && line[0] != '#' && line.rfind("zeta0", 0) != 0) {
        ++rows;
        feasible += line.find(",true,ok") != std::string::npos;
      }
    ok = ok && rows == 6 && feasible >= 1;
    det << "; diagonal grid " << feasible << "/" << rows << " cells estimated";
  }

  ok = ok && cli({"rfactor", "--input", input, "--method", "strat-prognostic", "--direction", "under", "--vary",
                  "control", "--boot", "500", "--seed", "3"},
                 &out) == 0;
  if (ok) {
    const auto j = nlohmann::json::parse(out);
    ok = j["status"] == "found";
    if (ok) det << "; R-factor " << j["value"].get<double>();
  }
  ok = ok && cli({"check-conditions", "--input", input, "--under-report", "0.05,0.1"}, &out) == 0;
  if (ok) det << "; ordering " << nlohmann::json::parse(out)["marginal"].get<std::string>();
  std::filesystem::remove_all(dir);
  return {ok, det.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 simulation study replication, (cor,cor) and (mis,mis)", table2},
      {"2 R-factor on the unconfounded design", rfactor},
      {"3 zero-bias reduction to reference estimators", zero_bias},
      {"4 monotonicity of the stratified estimator", monotonicity},
      {"5 margin preservation of corrected tables", margins},
      {"6 likelihood normalization and gradient", likelihood},
      {"7 ordering checker against brute force", ordering},
      {"8 end-to-end pipeline on the bundled survey data", end_to_end},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s [%s] %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %zu acceptance criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
