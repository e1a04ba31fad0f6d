#include "ccrecall/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace ccrecall {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonBinaryOutcome: return "NonBinaryOutcome";
    case ErrorCode::NonBinaryExposure: return "NonBinaryExposure";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::DegenerateLikelihood: return "DegenerateLikelihood";
    case ErrorCode::DegenerateMarginal: return "DegenerateMarginal";
    case ErrorCode::EmptyStratum: return "EmptyStratum";
    case ErrorCode::EmptyStratumCell: return "EmptyStratumCell";
    case ErrorCode::ScoreFitFailure: return "ScoreFitFailure";
    case ErrorCode::InfeasibleBias: return "InfeasibleBias";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::TooManyFailedResamples: return "TooManyFailedResamples";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::FileNotFound:
    case ErrorCode::MissingColumn:
    case ErrorCode::NonBinaryOutcome:
    case ErrorCode::NonBinaryExposure:
    case ErrorCode::RaggedRow:
    case ErrorCode::ParseError:
    case ErrorCode::Precondition:
      return true;
    default:
      return false;
  }
}

const char* to_string(BiasDirection d) {
  switch (d) {
    case BiasDirection::None: return "none";
    case BiasDirection::OverReporting: return "over-reporting";
    case BiasDirection::UnderReporting: return "under-reporting";
  }
  return "unknown";
}

RecallBias::RecallBias(BiasDirection direction, double theta_control, double theta_case)
    : direction_(direction), theta_control_(theta_control), theta_case_(theta_case) {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) {
      std::ostringstream os;
      os << "recall-bias parameter " << name << " = " << v << " must lie in [0, 1)";
      throw Error(ErrorCode::InvalidArgument, os.str());
    }
  };
  check(theta_control, "control");
  check(theta_case, "case");
  if (direction == BiasDirection::None && !(theta_control == 0.0 && theta_case == 0.0))
    throw Error(ErrorCode::InvalidArgument, "direction none requires zero bias parameters");
}

RecallBias RecallBias::with(int which, double value) const {
  if (direction_ == BiasDirection::None)
    throw Error(ErrorCode::InvalidArgument, "cannot vary a bias parameter without a direction");
  return which == 1 ? RecallBias(direction_, theta_control_, value)
                    : RecallBias(direction_, value, theta_case_);
}

// ---------------------------------------------------------------------------

CaseControlData::CaseControlData(std::vector<int> y, std::vector<int> t_star, Eigen::MatrixXd x,
                                 std::optional<std::vector<int>> stratum,
                                 std::vector<std::string> covariate_names)
    : y_(std::move(y)),
      t_star_(std::move(t_star)),
      x_(std::move(x)),
      stratum_(std::move(stratum)),
      names_(std::move(covariate_names)) {
  const std::size_t n = y_.size();
  if (n == 0) throw Error(ErrorCode::Precondition, "dataset has no records");
  if (t_star_.size() != n || static_cast<std::size_t>(x_.rows()) != n ||
      (stratum_ && stratum_->size() != n))
    throw Error(ErrorCode::RaggedRow, "record fields have inconsistent lengths");
  for (std::size_t i = 0; i < n; ++i) {
    if (y_[i] != 0 && y_[i] != 1)
      throw Error(ErrorCode::NonBinaryOutcome, "outcome must be 0/1 (record " +
                                                   std::to_string(i + 1) + ")");
    if (t_star_[i] != 0 && t_star_[i] != 1)
      throw Error(ErrorCode::NonBinaryExposure, "exposure must be 0/1 (record " +
                                                    std::to_string(i + 1) + ")");
  }
  if (!x_.allFinite()) throw Error(ErrorCode::ParseError, "covariates must be finite");
  if (names_.empty()) {
    for (std::size_t j = 0; j < p(); ++j) names_.push_back("x" + std::to_string(j + 1));
  } else if (names_.size() != p()) {
    throw Error(ErrorCode::InvalidArgument, "covariate name count does not match columns");
  }
}

std::size_t CaseControlData::n_cases() const {
  return static_cast<std::size_t>(std::count(y_.begin(), y_.end(), 1));
}

void CaseControlData::require_both_outcomes() const {
  const auto cases = n_cases();
  if (cases == 0 || cases == n())
    throw Error(ErrorCode::Precondition, "both cases and controls are required");
}

CaseControlData CaseControlData::subset(std::span<const std::size_t> rows) const {
  std::vector<int> y(rows.size()), t(rows.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), x_.cols());
  std::optional<std::vector<int>> s;
  if (stratum_) s.emplace(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = rows[k];
    y[k] = y_[r];
    t[k] = t_star_[r];
    x.row(static_cast<Eigen::Index>(k)) = x_.row(static_cast<Eigen::Index>(r));
    if (s) (*s)[k] = (*stratum_)[r];
  }
  return CaseControlData(std::move(y), std::move(t), std::move(x), std::move(s), names_);
}

Eigen::MatrixXd CaseControlData::design() const {
  Eigen::MatrixXd d(x_.rows(), x_.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x_.cols()) = x_;
  return d;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"')
    out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    fields.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

double parse_number(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ", column '" + column +
                                           "': cannot parse '" + s + "' as a number");
  return v;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw Error(ErrorCode::MissingColumn, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

CaseControlData parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty CSV input");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);

  const auto y_col = find_column(header, schema.outcome);
  const auto t_col = find_column(header, schema.exposure);
  std::optional<std::size_t> s_col;
  if (schema.stratum) s_col = find_column(header, *schema.stratum);

  std::vector<std::string> cov_names = schema.covariates;
  if (cov_names.empty()) {
    for (const auto& h : header)
      if (h != schema.outcome && h != schema.exposure && (!schema.stratum || h != *schema.stratum))
        cov_names.push_back(h);
  }
  std::vector<std::size_t> x_cols;
  for (const auto& c : cov_names) x_cols.push_back(find_column(header, c));

  std::vector<int> y, t;
  std::vector<double> xs;
  std::optional<std::vector<int>> strata;
  if (s_col) strata.emplace();

  std::size_t row = 0;  // 1-based data row, header excluded
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    const auto f = split_line(line);
    if (f.size() != header.size())
      throw Error(ErrorCode::RaggedRow, "row " + std::to_string(row) + " has " +
                                            std::to_string(f.size()) + " fields, expected " +
                                            std::to_string(header.size()));
    const double yv = parse_number(f[y_col], row, schema.outcome);
    if (yv != 0.0 && yv != 1.0)
      throw Error(ErrorCode::NonBinaryOutcome, "row " + std::to_string(row) + ", column '" +
                                                   schema.outcome + "': outcome must be 0 or 1");
    const double tv = parse_number(f[t_col], row, schema.exposure);
    if (tv != 0.0 && tv != 1.0)
      throw Error(ErrorCode::NonBinaryExposure, "row " + std::to_string(row) + ", column '" +
                                                    schema.exposure + "': exposure must be 0 or 1");
    y.push_back(static_cast<int>(yv));
    t.push_back(static_cast<int>(tv));
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      xs.push_back(parse_number(f[x_cols[k]], row, cov_names[k]));
    if (s_col) {
      const double sv = parse_number(f[*s_col], row, *schema.stratum);
      if (sv != std::floor(sv))
        throw Error(ErrorCode::ParseError, "row " + std::to_string(row) +
                                               ": stratum label must be an integer");
      strata->push_back(static_cast<int>(sv));
    }
  }
  if (y.empty()) throw Error(ErrorCode::Precondition, "CSV contains no data rows");

  const auto n = static_cast<Eigen::Index>(y.size());
  const auto p = static_cast<Eigen::Index>(x_cols.size());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = xs[static_cast<std::size_t>(i * p + j)];
  return CaseControlData(std::move(y), std::move(t), std::move(x), std::move(strata),
                         std::move(cov_names));
}

CaseControlData load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path + "'");
  return parse_csv(in, schema);
}

void write_csv(std::ostream& out, const CaseControlData& data, const CsvSchema& schema) {
  out << schema.outcome << ',' << schema.exposure;
  for (const auto& name : data.covariate_names()) out << ',' << name;
  const bool with_stratum = data.stratum().has_value();
  if (with_stratum) out << ',' << schema.stratum.value_or("stratum");
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << data.y()[i] << ',' << data.t_star()[i];
    for (Eigen::Index j = 0; j < data.x().cols(); ++j)
      out << ',' << data.x()(static_cast<Eigen::Index>(i), j);
    if (with_stratum) out << ',' << (*data.stratum())[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Feasibility

double feasibility_bound(const StratumTable& t, BiasDirection direction, int which) {
  double num = 0, den = 0;
  switch (direction) {
    case BiasDirection::None:
      return 1.0;
    case BiasDirection::OverReporting:
      num = which == 1 ? t.a_star : t.b_star;
      den = which == 1 ? t.cases() : t.controls();
      break;
    case BiasDirection::UnderReporting:
      num = which == 1 ? t.c_star : t.d_star;
      den = which == 1 ? t.cases() : t.controls();
      break;
  }
  return den > 0 ? num / den : 1.0;
}

std::vector<FeasibilityWarning> validate_bias_feasibility(const CaseControlData& data,
                                                          const RecallBias& bias) {
  std::vector<FeasibilityWarning> warnings;
  if (bias.direction() == BiasDirection::None || bias.is_zero()) return warnings;

  std::map<int, StratumTable> tables;
  for (std::size_t i = 0; i < data.n(); ++i) {
    auto& t = tables[data.stratum() ? (*data.stratum())[i] : 0];
    const bool exposed = data.t_star()[i] == 1;
    if (data.y()[i] == 1)
      (exposed ? t.a_star : t.c_star) += 1;
    else
      (exposed ? t.b_star : t.d_star) += 1;
  }
  for (const auto& [label, t] : tables) {
    for (int which : {1, 0}) {
      const double value = bias.theta(which);
      const double bound = feasibility_bound(t, bias.direction(), which);
      if (value > bound) {
        std::ostringstream os;
        os << "stratum " << label << ": " << (which == 1 ? "case" : "control")
           << " parameter " << value << " exceeds feasibility bound " << bound
           << "; corrected " << (which == 1 ? "case" : "control") << " count would be negative";
        warnings.push_back({label, which, value, bound, os.str()});
      }
    }
  }
  return warnings;
}

// ---------------------------------------------------------------------------

const char* to_string(Method m) {
  switch (m) {
    case Method::Crude: return "crude";
    case Method::ML: return "ml";
    case Method::StratPropensity: return "strat-propensity";
    case Method::StratPrognostic: return "strat-prognostic";
    case Method::StratUser: return "strat-user";
    case Method::MantelHaenszel: return "mh";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::Crude, Method::ML, Method::StratPropensity, Method::StratPrognostic,
                   Method::StratUser, Method::MantelHaenszel})
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + s + "'");
}

double EstimateResult::psi() const { return std::exp(log_psi); }

}  // namespace ccrecall
