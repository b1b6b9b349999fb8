#include "rem/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "rem/errors.hpp"

namespace rem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ResidualSet schoenfeld(const FitResult& fit, const Design& design, int jobs) {
  (void)jobs;  // residuals are cheap next to the fit; kept sequential
  const auto layout = layout_of(design, fit);
  const auto p = static_cast<Eigen::Index>(design.column_count());
  ResidualSet res;
  for (const auto& c : design.columns()) res.columns.push_back(c.name);

  std::vector<VectorXd> rows;
  EventBlock scratch;
  for (std::size_t k = 0; k < design.block_count(); ++k) {
    const EventBlock& b = design.block(k, scratch);
    if (b.event_rows.empty()) continue;
    VectorXd eta = linear_predictor(b, layout, fit.theta);
    VectorXd w = (eta.array() - eta.maxCoeff()).exp().matrix();
    const double S0 = w.sum();
    const VectorXd S1 = b.x.transpose() * w;
    double E0 = 0.0;
    VectorXd E1 = VectorXd::Zero(p);
    for (auto e : b.event_rows) {
      E0 += w[e];
      E1 += w[e] * b.x.row(e).transpose();
    }
    // Efron: average of the d successively-reduced weighted means.
    const auto d = b.event_rows.size();
    VectorXd mean = VectorXd::Zero(p);
    for (std::size_t j = 0; j < d; ++j) {
      const double a = fit.ties == Ties::efron ? static_cast<double>(j) / static_cast<double>(d) : 0.0;
      mean += (S1 - a * E1) / (S0 - a * E0);
    }
    mean /= static_cast<double>(d);
    for (auto e : b.event_rows) {
      rows.push_back(b.x.row(e).transpose() - mean);
      res.event_times.push_back(b.time);
      res.event_dyads.push_back(b.dyads[static_cast<std::size_t>(e)]);
    }
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  res.schoenfeld.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) res.schoenfeld.row(i) = rows[static_cast<std::size_t>(i)].transpose();
  res.dfbeta = res.schoenfeld * fit.covariance;  // V symmetric
  res.scaled = static_cast<double>(n) * res.dfbeta;
  res.scaled.rowwise() += fit.beta.transpose();
  return res;
}

const char* to_string(TimeTransform t) {
  switch (t) {
    case TimeTransform::rank: return "rank";
    case TimeTransform::identity: return "identity";
    case TimeTransform::log: return "log";
  }
  return "?";
}

TimeTransform parse_time_transform(const std::string& s) {
  if (s == "rank") return TimeTransform::rank;
  if (s == "identity") return TimeTransform::identity;
  if (s == "log") return TimeTransform::log;
  throw InputError("unknown time transform '" + s + "' (rank|identity|log)");
}

namespace {

VectorXd transform_times(const std::vector<double>& t, TimeTransform tr, double t0) {
  const auto n = static_cast<Eigen::Index>(t.size());
  VectorXd g(n);
  if (tr == TimeTransform::rank) {
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j < order.size() && t[order[j]] == t[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
      for (std::size_t k = i; k < j; ++k) g[static_cast<Eigen::Index>(order[k])] = avg;
      i = j;
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = t[static_cast<std::size_t>(i)];
      g[i] = tr == TimeTransform::identity ? v : std::log(v - t0 + 1.0);
    }
  }
  return g;
}

double chi2_sf(double x, double df) {
  if (!(x > 0.0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

std::vector<TrendPoint> moving_average(const std::vector<double>& t, const VectorXd& y) {
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
  const std::size_t n = order.size();
  const std::size_t h = std::max<std::size_t>(2, n / 20);
  std::vector<TrendPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= h ? i - h : 0, hi = std::min(n, i + h + 1);
    double s = 0.0;
    for (std::size_t k = lo; k < hi; ++k) s += y[static_cast<Eigen::Index>(order[k])];
    out[i] = {t[order[i]], y[static_cast<Eigen::Index>(order[i])], s / static_cast<double>(hi - lo)};
  }
  return out;
}

}  // namespace

PhTestResult ph_test(const ResidualSet& res, const MatrixXd& V, const VectorXd& beta, TimeTransform transform,
                     double window_begin) {
  (void)beta;
  PhTestResult out;
  out.transform = transform;
  const auto n = res.schoenfeld.rows();
  const auto p = res.schoenfeld.cols();
  if (n < 2) {
    for (Eigen::Index j = 0; j < p; ++j) out.rows.push_back({res.columns[static_cast<std::size_t>(j)], false, 0, 0, 1});
    return out;
  }
  VectorXd g = transform_times(res.event_times, transform, window_begin);
  g.array() -= g.mean();
  const double gg = g.squaredNorm();
  const double d = static_cast<double>(n);
  const VectorXd U = res.schoenfeld.transpose() * g;
  const VectorXd UV = V * U;

  std::vector<Eigen::Index> ok;
  for (Eigen::Index j = 0; j < p; ++j) {
    PhTestRow row;
    row.column = res.columns[static_cast<std::size_t>(j)];
    const auto col = res.schoenfeld.col(j);
    const double var = (col.array() - col.mean()).square().sum();
    row.testable = gg > 0.0 && V(j, j) > 0.0 && var > 1e-24 * std::max(1.0, col.squaredNorm());
    if (row.testable) {
      const auto s = res.scaled.col(j);
      const VectorXd sc = (s.array() - s.mean()).matrix();
      const double ss = sc.norm();
      row.rho = ss > 0.0 ? sc.dot(g) / (ss * std::sqrt(gg)) : 0.0;
      row.chisq = d * UV[j] * UV[j] / (V(j, j) * gg);
      row.p = chi2_sf(row.chisq, 1.0);
      ok.push_back(j);
    } else {
      row.rho = std::numeric_limits<double>::quiet_NaN();
      row.chisq = std::numeric_limits<double>::quiet_NaN();
      row.p = std::numeric_limits<double>::quiet_NaN();
    }
    out.rows.push_back(row);
    out.trends.push_back(moving_average(res.event_times, res.scaled.col(j)));
  }
  if (!ok.empty()) {
    const auto q = static_cast<Eigen::Index>(ok.size());
    VectorXd Us(q);
    MatrixXd Vs(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
      Us[a] = U[ok[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < q; ++b) Vs(a, b) = V(ok[static_cast<std::size_t>(a)], ok[static_cast<std::size_t>(b)]);
    }
    out.global_chisq = d * Us.dot(Vs * Us) / gg;
    out.global_df = static_cast<int>(q);
    out.global_p = chi2_sf(out.global_chisq, static_cast<double>(q));
  }
  return out;
}

PhTestResult ph_test(const FitResult& fit, const Design& design, TimeTransform transform, int jobs) {
  return ph_test(schoenfeld(fit, design, jobs), fit.covariance, fit.beta, transform, design.window().begin);
}

LrTest lr_test(double loglik_small, double loglik_large, int df) {
  if (df < 0) throw InputError("likelihood-ratio test needs df >= 0");
  const double diff = 2.0 * (loglik_large - loglik_small);
  const double noise = 1e-7 * (1.0 + std::abs(loglik_large));
  if (diff < -noise)
    throw NumericalError("larger model has a lower log-likelihood (chi-square " + std::to_string(diff) +
                         "); one of the fits failed");
  LrTest t;
  t.chisq = std::max(0.0, diff);
  t.df = df;
  t.p = df == 0 ? 1.0 : chi2_sf(t.chisq, df);
  return t;
}

LrTest lr_test(const FitResult& small, const FitResult& large) {
  // Every small-model effect must be representable in the large model:
  // same base covariate, and periods of the small model unions of large ones.
  for (const auto& c : small.coefficients) {
    bool found = false;
    if (c.period < 0) {
      for (const auto& l : large.coefficients) found = found || l.base == c.base;
    } else {
      std::vector<std::pair<double, double>> pieces;
      bool constant = false;
      for (const auto& l : large.coefficients) {
        if (l.base != c.base) continue;
        if (l.period < 0) constant = true;
        else if (l.period_end > c.period_begin && l.period_begin < c.period_end)
          pieces.emplace_back(l.period_begin, l.period_end);
      }
      std::sort(pieces.begin(), pieces.end());
      double reach = c.period_begin;
      found = !constant && !pieces.empty();
      for (const auto& [a, b] : pieces) {
        if (a != reach || b > c.period_end) found = false;
        reach = b;
      }
      found = found && reach == c.period_end;
    }
    if (!found) throw InputError("models are not nested: '" + c.name + "' has no counterpart in the larger model");
  }
  std::set<std::string> fams;
  for (const auto& v : large.variance_components) fams.insert(v.family);
  for (const auto& v : small.variance_components)
    if (!fams.count(v.family))
      throw InputError("models are not nested: random effect '" + v.family + "' missing from the larger model");
  if (large.df < small.df) throw InputError("models are not nested: the larger model has fewer parameters");
  return lr_test(small.loglik_model, large.loglik_model, static_cast<int>(large.df - small.df));
}

double r_squared(double loglik_null, double loglik_model, std::size_t n_events) {
  if (n_events == 0) throw InputError("R-squared needs at least one event");
  return 100.0 * (1.0 - std::exp(-(2.0 / static_cast<double>(n_events)) * (loglik_model - loglik_null)));
}

double r_squared(const FitResult& fit) { return r_squared(fit.loglik_null, fit.loglik_model, fit.n_events); }

InformationCriteria information_criteria(double loglik_null, double loglik_model, std::size_t k,
                                         std::size_t n_events) {
  if (n_events == 0) throw InputError("information criteria need at least one event");
  InformationCriteria ic;
  ic.k = k;
  ic.n = n_events;
  const double kk = static_cast<double>(k), logn = std::log(static_cast<double>(n_events));
  ic.aic = -2.0 * loglik_model + 2.0 * kk;
  ic.bic = -2.0 * loglik_model + kk * logn;
  const double chisq = 2.0 * (loglik_model - loglik_null);
  ic.aic_gain = chisq - 2.0 * kk;
  ic.bic_gain = chisq - kk * logn;
  return ic;
}

InformationCriteria information_criteria(const FitResult& fit) {
  return information_criteria(fit.loglik_null, fit.loglik_model, fit.df, fit.n_events);
}

HazardRatio hazard_ratio(double beta, double se, double delta, double level) {
  static const boost::math::normal N;
  const double z = boost::math::quantile(N, 0.5 + 0.5 * level);
  HazardRatio h;
  h.beta = beta;
  h.se = se;
  h.delta = delta;
  h.multiplier = std::exp(beta * delta);
  const double half = z * h.multiplier * std::abs(delta) * se;
  h.lower = h.multiplier - half;
  h.upper = h.multiplier + half;
  h.percent_change = 100.0 * (h.multiplier - 1.0);
  return h;
}

std::vector<HazardRatio> hazard_ratio_report(const FitResult& fit, const std::map<std::string, double>& per_unit,
                                             double level) {
  std::vector<HazardRatio> out;
  for (const auto& c : fit.coefficients) {
    double delta = 1.0;
    if (auto it = per_unit.find(c.name); it != per_unit.end()) {
      delta = it->second;
    } else if (auto jt = per_unit.find(c.base); jt != per_unit.end()) {
      delta = jt->second;
    }
    auto h = hazard_ratio(c.estimate, c.se, delta, level);
    h.name = c.name;
    out.push_back(h);
  }
  return out;
}

CorrelationMatrix covariate_correlations(const Design& design, bool event_rows_only, double flag_threshold) {
  const auto p = static_cast<Eigen::Index>(design.column_count());
  CorrelationMatrix out;
  for (const auto& c : design.columns()) out.columns.push_back(c.name);
  // Shifted sums keep the single-pass moments stable.
  VectorXd shift;
  VectorXd s = VectorXd::Zero(p);
  MatrixXd ss = MatrixXd::Zero(p, p);
  double n = 0.0;
  EventBlock scratch;
  for (std::size_t k = 0; k < design.block_count(); ++k) {
    const EventBlock& b = design.block(k, scratch);
    auto add = [&](Eigen::Index r) {
      if (shift.size() == 0) shift = b.x.row(r).transpose();
      const VectorXd v = b.x.row(r).transpose() - shift;
      s += v;
      ss.noalias() += v * v.transpose();
      n += 1.0;
    };
    if (event_rows_only) {
      for (auto e : b.event_rows) add(e);
    } else {
      for (Eigen::Index r = 0; r < b.x.rows(); ++r) add(r);
    }
  }
  out.r = MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
  if (n < 2.0) return out;
  const MatrixXd cov = (ss - s * s.transpose() / n) / (n - 1.0);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = 0; b < p; ++b) {
      const double va = cov(a, a), vb = cov(b, b);
      const double tol = 1e-14 * (1.0 + std::abs(ss(a, a)) / n);
      if (va <= tol || vb <= 1e-14 * (1.0 + std::abs(ss(b, b)) / n)) continue;
      out.r(a, b) = a == b ? 1.0 : std::clamp(cov(a, b) / std::sqrt(va * vb), -1.0, 1.0);
      if (a < b) {
        out.max_abs = std::max(out.max_abs, std::abs(out.r(a, b)));
        if (std::abs(out.r(a, b)) > flag_threshold) out.flagged.emplace_back(a, b);
      }
    }
  }
  return out;
}

}  // namespace rem
