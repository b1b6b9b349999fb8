#include <cmath>
#include <random>

#include "doctest.h"
#include "rem/errors.hpp"
#include "rem/estimator.hpp"
#include "support.hpp"

using namespace rem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Direct evaluation of the tied-events likelihood from its definition.
long double naive_loglik(const Design& d, const VectorXd& theta, Ties ties, bool with_groups) {
  long double ll = 0.0L;
  EventBlock scratch;
  for (std::size_t k = 0; k < d.block_count(); ++k) {
    const EventBlock& b = d.block(k, scratch);
    std::vector<long double> eta(b.dyads.size());
    for (std::size_t r = 0; r < eta.size(); ++r) {
      long double v = 0.0L;
      for (Eigen::Index j = 0; j < b.x.cols(); ++j) v += static_cast<long double>(b.x(static_cast<Eigen::Index>(r), j)) * theta[j];
      if (with_groups) {
        std::size_t off = d.column_count();
        for (std::size_t f = 0; f < d.families().size(); ++f) {
          if (b.groups[f][r] >= 0) v += theta[static_cast<Eigen::Index>(off + b.groups[f][r])];
          off += d.families()[f].size();
        }
      }
      eta[r] = v;
    }
    long double S = 0.0L, E = 0.0L;
    for (auto v : eta) S += std::exp(v);
    for (auto e : b.event_rows) {
      E += std::exp(eta[static_cast<std::size_t>(e)]);
      ll += eta[static_cast<std::size_t>(e)];
    }
    const auto n = b.event_rows.size();
    for (std::size_t j = 0; j < n; ++j) {
      const long double a = ties == Ties::efron ? static_cast<long double>(j) / n : 0.0L;
      ll -= std::log(S - a * E);
    }
  }
  return ll;
}

VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale) {
  std::normal_distribution<double> N(0.0, scale);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = N(rng);
  return v;
}

}  // namespace

TEST_CASE("micro example: probabilities, log-likelihood and estimate") {
  auto f = remtest::make_two_invasions();
  const Design& d = *f->design;
  REQUIRE(d.block_count() == 2);
  EventBlock s1, s2;
  const auto& b1 = d.block(0, s1);
  const auto& b2 = d.block(1, s2);
  VectorXd beta = VectorXd::Constant(1, -1.0);

  VectorXd p1 = event_probabilities(b1, beta);
  REQUIRE(p1.size() == 4);
  const double e1 = std::exp(-1.0), e2 = std::exp(-2.0), e3 = std::exp(-3.0);
  const double z1 = e1 + 2 * e3 + e2;
  CHECK(p1[0] == doctest::Approx(e1 / z1).epsilon(1e-14));
  CHECK(p1[1] == doctest::Approx(e3 / z1).epsilon(1e-14));
  CHECK(p1[2] == doctest::Approx(e3 / z1).epsilon(1e-14));
  CHECK(p1[3] == doctest::Approx(e2 / z1).epsilon(1e-14));
  VectorXd p2 = event_probabilities(b2, beta);
  REQUIRE(p2.size() == 3);
  const double z2 = 2 * e2 + e3;
  CHECK(p2[0] == doctest::Approx(e2 / z2).epsilon(1e-14));
  CHECK(p2[1] == doctest::Approx(e3 / z2).epsilon(1e-14));
  CHECK(b2.event_rows.at(0) == 1);

  const double ll = partial_loglik(d, beta);
  CHECK(ll == doctest::Approx(std::log(e1 / z1) + std::log(e3 / z2)).epsilon(1e-14));
  CHECK(ll == doctest::Approx(-2.356).epsilon(5e-4));

  auto fit = fit_fixed(d);
  CHECK(fit.beta[0] == doctest::Approx(-0.64).epsilon(0.01 / 0.64));
  auto [g, h] = score_and_hessian(d, VectorXd::Constant(1, -0.64));
  CHECK(std::abs(g[0]) < 0.01);
}

TEST_CASE("null model and forced events") {
  std::mt19937_64 rng(3);
  auto d = remtest::random_design(rng, {});
  double expected = 0.0;
  for (const auto& b : d.blocks()) expected -= std::log(static_cast<double>(b.dyads.size()));
  CHECK(partial_loglik(d, VectorXd::Zero(3)) == doctest::Approx(expected).epsilon(1e-13));

  EventBlock b;
  b.time = 1.0;
  b.dyads = {{SpeciesId{0}, RegionId{0}}};
  b.x = MatrixXd::Constant(1, 1, 2.5);
  b.event_rows = {0};
  MaterializedDesign one({b}, {{"x", "x", "", -1, 0, 0}}, {}, {0.0, 2.0});
  CHECK(partial_loglik(one, VectorXd::Constant(1, 0.7)) == doctest::Approx(0.0));
}

TEST_CASE("log-likelihood matches the naive definition, with ties") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto d = remtest::random_design(rng, {12, 9, 3, 4, {4, 3}});
    const auto layout = ParameterLayout::with_families(d);
    VectorXd theta = random_vector(rng, static_cast<Eigen::Index>(layout.total()), 0.7);
    for (Ties ties : {Ties::breslow, Ties::efron}) {
      const double ll = evaluate(d, layout, theta, {ties, false, 1}).loglik;
      CHECK(ll == doctest::Approx(static_cast<double>(naive_loglik(d, theta, ties, true))).epsilon(1e-12));
    }
  }
}

TEST_CASE("score and information match finite differences") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    auto d = remtest::random_design(rng, {8, 7, 2, 3, {3, 2}});
    const auto layout = ParameterLayout::with_families(d);
    const auto P = static_cast<Eigen::Index>(layout.total());
    VectorXd theta = random_vector(rng, P, 0.5);
    for (Ties ties : {Ties::breslow, Ties::efron}) {
      auto ev = evaluate(d, layout, theta, {ties, true, 1});
      const double h = 1e-5;
      for (Eigen::Index i = 0; i < P; ++i) {
        VectorXd up = theta, dn = theta;
        up[i] += h;
        dn[i] -= h;
        auto eu = evaluate(d, layout, up, {ties, true, 1});
        auto ed = evaluate(d, layout, dn, {ties, true, 1});
        CHECK(ev.score[i] == doctest::Approx((eu.loglik - ed.loglik) / (2 * h)).epsilon(1e-6));
        for (Eigen::Index j = 0; j < P; ++j)
          CHECK(ev.information(j, i) == doctest::Approx(-(eu.score[j] - ed.score[j]) / (2 * h)).epsilon(1e-5).scale(1e-3));
      }
      CHECK((ev.information - ev.information.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("probabilities sum to one and are location invariant") {
  std::mt19937_64 rng(17);
  auto d = remtest::random_design(rng, {6, 10, 3, 1, {}});
  VectorXd beta = random_vector(rng, 3, 2.0);
  for (const auto& b : d.blocks()) CHECK(event_probabilities(b, beta).sum() == doctest::Approx(1.0).epsilon(1e-14));

  auto shifted_blocks = d.blocks();
  for (auto& b : shifted_blocks) b.x.col(1).array() += 37.0 * b.time;
  MaterializedDesign shifted(shifted_blocks, d.columns(), d.families(), d.window());
  CHECK(partial_loglik(shifted, beta) == doctest::Approx(partial_loglik(d, beta)).epsilon(1e-10));
}

TEST_CASE("Breslow and Efron agree without ties") {
  std::mt19937_64 rng(23);
  auto d = remtest::random_design(rng, {15, 8, 2, 1, {}});
  VectorXd beta = random_vector(rng, 2, 1.0);
  CHECK(partial_loglik(d, beta, Ties::breslow) == partial_loglik(d, beta, Ties::efron));
}

TEST_CASE("fit reaches a stationary point and covariance is the inverse information") {
  std::mt19937_64 rng(29);
  auto d = remtest::random_design(rng, {40, 10, 2, 2, {}});
  for (Ties ties : {Ties::breslow, Ties::efron}) {
    FitOptions o;
    o.ties = ties;
    auto fit = fit_fixed(d, o);
    auto [g, h] = score_and_hessian(d, fit.beta, ties);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-8);
    CHECK((fit.covariance * h - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(fit.loglik_model >= fit.loglik_null);
    CHECK(fit.loglik_null == doctest::Approx(partial_loglik(d, VectorXd::Zero(2), ties)));
    CHECK(fit.coefficients[0].se == doctest::Approx(std::sqrt(fit.covariance(0, 0))));
  }
}

TEST_CASE("collinear and constant columns are rejected by name") {
  std::mt19937_64 rng(31);
  auto d = remtest::random_design(rng, {20, 6, 2, 1, {}});
  auto blocks = d.blocks();
  for (auto& b : blocks) {
    MatrixXd x(b.x.rows(), 3);
    x << b.x, 2.0 * b.x.col(0) - 0.5 * b.x.col(1);
    b.x = x;
  }
  std::vector<ColumnInfo> cols = d.columns();
  cols.push_back({"combo", "combo", "", -1, 0, 0});
  MaterializedDesign bad(blocks, cols, {}, d.window());
  try {
    fit_fixed(bad);
    FAIL("expected a rank error");
  } catch (const RankDeficiencyError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("combo") != std::string::npos);
    CHECK(msg.find("x1") != std::string::npos);
  }

  auto flat = d.blocks();
  for (auto& b : flat) b.x.col(1).setConstant(4.0);
  MaterializedDesign constant(flat, d.columns(), {}, d.window());
  CHECK_THROWS_AS(fit_fixed(constant), RankDeficiencyError);
}

TEST_CASE("non-finite covariates are an input error") {
  std::mt19937_64 rng(37);
  auto d = remtest::random_design(rng, {5, 5, 1, 1, {}});
  auto blocks = d.blocks();
  blocks[2].x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  MaterializedDesign bad(blocks, d.columns(), {}, d.window());
  CHECK_THROWS_AS(partial_loglik(bad, VectorXd::Zero(1)), InputError);
}

TEST_CASE("separated data fails to converge with a trace") {
  // The event row always has the largest x: the estimate runs off to +inf.
  std::vector<EventBlock> blocks;
  for (int k = 0; k < 5; ++k) {
    EventBlock b;
    b.time = k;
    b.x.resize(3, 1);
    b.x << 0.0, 1.0, 2.0 + k;
    b.dyads = {{SpeciesId{0}, RegionId{0}}, {SpeciesId{1}, RegionId{0}}, {SpeciesId{2}, RegionId{0}}};
    b.event_rows = {2};
    blocks.push_back(b);
  }
  MaterializedDesign d(blocks, {{"x", "x", "", -1, 0, 0}}, {}, {0.0, 5.0});
  CHECK_THROWS_AS(fit_fixed(d), ConvergenceError);
}

TEST_CASE("evaluation is bitwise identical for any number of jobs") {
  std::mt19937_64 rng(41);
  auto d = remtest::random_design(rng, {200, 12, 3, 3, {5}});
  const auto layout = ParameterLayout::with_families(d);
  VectorXd theta = random_vector(rng, static_cast<Eigen::Index>(layout.total()), 0.4);
  auto a = evaluate(d, layout, theta, {Ties::efron, true, 1});
  auto b = evaluate(d, layout, theta, {Ties::efron, true, 4});
  CHECK(a.loglik == b.loglik);
  CHECK(a.score == b.score);
  CHECK(a.information == b.information);
}

TEST_CASE("ridge limits of the penalized fit") {
  std::mt19937_64 rng(43);
  auto d = remtest::random_design(rng, {60, 8, 2, 2, {4}});
  // Large SD: the same optimum as fixed group effects (one group fixed at 0
  // to absorb the softmax's shift invariance is not needed: groups vary within
  // risk sets, but the comparison is on the log-likelihood).
  const double big[] = {1e4};
  auto loose = fit_penalized(d, big);
  const auto layout = ParameterLayout::with_families(d);
  auto ev = evaluate(d, layout, loose.theta, {Ties::efron, false, 1});
  CHECK(ev.score.cwiseAbs().maxCoeff() < 1e-5);

  const double tiny[] = {1e-4};
  auto tight = fit_penalized(d, tiny);
  for (const auto& fr : tight.frailties) CHECK(std::abs(fr.estimate) < 1e-6);
  auto fixed = fit_fixed(d);
  CHECK((tight.beta - fixed.beta).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(tight.loglik_model == doctest::Approx(fixed.loglik_model).epsilon(1e-6));
}

TEST_CASE("mixed fit reports a degenerate component at the lower bound") {
  std::mt19937_64 rng(47);
  auto d = remtest::random_design(rng, {80, 8, 2, 2, {3}});
  auto fit = fit_mixed(d);
  REQUIRE(fit.variance_components.size() == 1);
  // Frailties are pure noise here: a small SD, never an error.
  CHECK(fit.variance_components[0].sigma < 0.5);
  CHECK(fit.loglik_model >= fit.loglik_null - 1e-9);
  CHECK(fit.variance_components[0].p_value <= 1.0);
}

TEST_CASE("Breslow increments: uniform risk sets give 1/m") {
  std::vector<EventBlock> blocks;
  const int m = 7;
  for (int k = 0; k < 6; ++k) {
    EventBlock b;
    b.time = 1900 + k;
    b.x = MatrixXd::Random(m, 1);
    for (int r = 0; r < m; ++r) b.dyads.push_back({SpeciesId{r}, RegionId{0}});
    b.event_rows = {k % m};
    blocks.push_back(b);
  }
  MaterializedDesign d(blocks, {{"x", "x", "", -1, 0, 0}}, {}, {1899.5, 1906.0});
  FitResult null_fit;
  null_fit.beta = VectorXd::Zero(1);
  null_fit.theta = null_fit.beta;
  auto h = breslow_baseline(d, null_fit);
  REQUIRE(h.points.size() == 7);
  CHECK(h.points[0].time == 1899.5);
  CHECK(h.points[0].cumulative == 0.0);
  for (std::size_t i = 1; i < h.points.size(); ++i) {
    CHECK(h.points[i].increment == doctest::Approx(1.0 / m));
    CHECK(h.points[i].cumulative >= h.points[i - 1].cumulative);
  }
  CHECK(h.cumulative_at(1903.5) == doctest::Approx(4.0 / m));
  CHECK(h.cumulative_at(1800.0) == 0.0);
}
