#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rem/covariates.hpp"
#include "rem/estimator.hpp"

namespace rem {

// One row per event (tied events each get their own row).
struct ResidualSet {
  std::vector<std::string> columns;
  std::vector<double> event_times;
  std::vector<Dyad> event_dyads;
  Eigen::MatrixXd schoenfeld;  // x_event - risk-set weighted mean
  Eigen::MatrixXd scaled;      // d * V * r + beta
  Eigen::MatrixXd dfbeta;      // V * r
};

ResidualSet schoenfeld(const FitResult& fit, const Design& design, int jobs = 1);

enum class TimeTransform { rank, identity, log };
const char* to_string(TimeTransform t);
TimeTransform parse_time_transform(const std::string& s);

struct PhTestRow {
  std::string column;
  bool testable = true;
  double rho = 0.0;  // correlation of scaled residuals with transformed time
  double chisq = 0.0;
  double p = 1.0;
};

struct TrendPoint {
  double time = 0.0;
  double residual = 0.0;
  double trend = 0.0;
};

struct PhTestResult {
  TimeTransform transform = TimeTransform::rank;
  std::vector<PhTestRow> rows;
  double global_chisq = 0.0;
  int global_df = 0;
  double global_p = 1.0;
  std::vector<std::vector<TrendPoint>> trends;  // per column
};

// Score test of zero slope of each scaled residual on g(t), with V the
// fixed-effect covariance.
PhTestResult ph_test(const ResidualSet& res, const Eigen::MatrixXd& covariance, const Eigen::VectorXd& beta,
                     TimeTransform transform = TimeTransform::rank, double window_begin = 0.0);
PhTestResult ph_test(const FitResult& fit, const Design& design, TimeTransform transform = TimeTransform::rank,
                     int jobs = 1);

struct LrTest {
  double chisq = 0.0;
  int df = 0;
  double p = 1.0;
};

// Plain arithmetic on two log-likelihoods.
LrTest lr_test(double loglik_small, double loglik_large, int df);
// Checks that `small` is nested in `large` by coefficient names, period
// refinement and random-effect families; throws InputError otherwise.
LrTest lr_test(const FitResult& small, const FitResult& large);

// 1 - exp(-(2/n)(l_model - l_null)), in percent.
double r_squared(double loglik_null, double loglik_model, std::size_t n_events);
double r_squared(const FitResult& fit);

// Standard criteria (-2l + penalty, smaller is better) alongside the gain over
// the null model (chi-square minus penalty, larger is better), the form some
// summary tables print under the same names.
struct InformationCriteria {
  std::size_t k = 0;  // parameters
  std::size_t n = 0;  // events
  double aic = 0.0;
  double bic = 0.0;
  double aic_gain = 0.0;
  double bic_gain = 0.0;
};

InformationCriteria information_criteria(double loglik_null, double loglik_model, std::size_t k, std::size_t n_events);
InformationCriteria information_criteria(const FitResult& fit);

struct HazardRatio {
  std::string name;
  double beta = 0.0;
  double se = 0.0;
  double delta = 1.0;
  double multiplier = 1.0;  // exp(beta * delta)
  double lower = 1.0;       // delta-method interval
  double upper = 1.0;
  double percent_change = 0.0;
};

HazardRatio hazard_ratio(double beta, double se, double delta, double level = 0.95);
// `per_unit` is looked up by column name, then base covariate name; default 1.
std::vector<HazardRatio> hazard_ratio_report(const FitResult& fit, const std::map<std::string, double>& per_unit = {},
                                             double level = 0.95);

struct CorrelationMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd r;  // NaN where a column is constant
  double max_abs = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> flagged;  // |r| > threshold
};

// Pearson correlations over event rows (or every risk-set row).
CorrelationMatrix covariate_correlations(const Design& design, bool event_rows_only = true,
                                         double flag_threshold = 0.7);

}  // namespace rem
