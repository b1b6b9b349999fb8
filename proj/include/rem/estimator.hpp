#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rem/covariates.hpp"
#include "rem/model_spec.hpp"

namespace rem {

struct FitResult;

// Position of fixed effects and random-effect families inside the joint
// parameter vector theta = (beta, b_family0, b_family1, ...).
struct ParameterLayout {
  std::size_t fixed = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> sizes;

  std::size_t total() const;
  static ParameterLayout fixed_only(const Design& design);
  static ParameterLayout with_families(const Design& design);
};

// eta for every risk-set row of a block, frailties included.
Eigen::VectorXd linear_predictor(const EventBlock& block, const ParameterLayout& layout, const Eigen::VectorXd& theta);
ParameterLayout layout_of(const Design& design, const FitResult& fit);

// Partial log-likelihood with its score and information (negative Hessian).
struct Evaluation {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

struct EvalOptions {
  Ties ties = Ties::efron;
  bool hessian = true;
  int jobs = 1;
};

Evaluation evaluate(const Design& design, const ParameterLayout& layout, const Eigen::VectorXd& theta,
                    const EvalOptions& opts);

// Fixed-effects partial log-likelihood at beta.
double partial_loglik(const Design& design, const Eigen::VectorXd& beta, Ties ties = Ties::efron);
// (score, negative Hessian) at beta.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> score_and_hessian(const Design& design, const Eigen::VectorXd& beta,
                                                              Ties ties = Ties::efron);
// Conditional probability of each risk-set row of a block being the event.
Eigen::VectorXd event_probabilities(const EventBlock& block, const Eigen::VectorXd& beta);

struct Coefficient {
  std::string name;
  std::string base;
  std::string unit;
  int period = -1;
  double period_begin = 0.0;
  double period_end = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct VarianceComponent {
  std::string family;
  double sigma = 0.0;
  bool at_lower_bound = false;
  double lr_chisq = 0.0;  // against the model without this family
  double p_value = 1.0;   // 50:50 chi-square(0)/chi-square(1) mixture
};

struct Frailty {
  std::string family;
  std::string label;
  double estimate = 0.0;
  double se = 0.0;
};

struct BaselinePoint {
  double time = 0.0;
  double increment = 0.0;
  double cumulative = 0.0;
};

struct BaselineHazard {
  std::vector<BaselinePoint> points;
  double cumulative_at(double t) const;
};

struct Convergence {
  int iterations = 0;
  double gradient_norm = 0.0;
  int outer_evaluations = 0;
};

struct FitResult {
  std::vector<Coefficient> coefficients;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // fixed effects
  Eigen::VectorXd theta;       // beta followed by all frailties
  bool random_effects = false;
  Ties ties = Ties::efron;

  double loglik_null = 0.0;
  // Laplace-integrated log-likelihood for mixed fits, partial log-likelihood otherwise.
  double loglik_model = 0.0;
  double loglik_partial = 0.0;
  double loglik_penalized = 0.0;
  std::size_t n_events = 0;
  std::size_t df = 0;  // fixed effects + variance components

  std::vector<VarianceComponent> variance_components;
  std::vector<Frailty> frailties;
  BaselineHazard baseline;
  Convergence convergence;
};

struct FitOptions {
  Ties ties = Ties::efron;
  int max_iterations = 100;
  double gradient_tol = 1e-8;
  int jobs = 1;
  double sigma_lower = 1e-4;
  double sigma_upper = 10.0;
  double sigma_start = 0.5;
  int max_cycles = 8;
  double cycle_tol = 1e-3;  // on log sigma between coordinate cycles
  std::optional<Eigen::VectorXd> init;
};

FitResult fit_fixed(const Design& design, const FitOptions& opts = {});
// Penalized partial likelihood with the random-effect SDs held at `sigmas`.
FitResult fit_penalized(const Design& design, std::span<const double> sigmas, const FitOptions& opts = {});
// Penalized fit with each SD chosen by maximizing the Laplace-approximate
// integrated log-likelihood, coordinate-wise in family order.
FitResult fit_mixed(const Design& design, const FitOptions& opts = {});

BaselineHazard breslow_baseline(const Design& design, const FitResult& fit, int jobs = 1);

}  // namespace rem
