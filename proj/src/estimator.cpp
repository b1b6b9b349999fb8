#include "rem/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/minima.hpp>

#include "rem/errors.hpp"

namespace rem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t ParameterLayout::total() const {
  std::size_t n = fixed;
  for (auto s : sizes) n += s;
  return n;
}

ParameterLayout ParameterLayout::fixed_only(const Design& design) {
  ParameterLayout l;
  l.fixed = design.column_count();
  return l;
}

ParameterLayout ParameterLayout::with_families(const Design& design) {
  ParameterLayout l = fixed_only(design);
  std::size_t off = l.fixed;
  for (const auto& f : design.families()) {
    l.offsets.push_back(off);
    l.sizes.push_back(f.size());
    off += f.size();
  }
  return l;
}

VectorXd linear_predictor(const EventBlock& b, const ParameterLayout& layout, const VectorXd& theta) {
  VectorXd eta = b.x * theta.head(static_cast<Eigen::Index>(layout.fixed));
  for (std::size_t f = 0; f < layout.offsets.size(); ++f) {
    const auto& g = b.groups[f];
    for (std::size_t r = 0; r < g.size(); ++r)
      if (g[r] >= 0) eta[static_cast<Eigen::Index>(r)] += theta[static_cast<Eigen::Index>(layout.offsets[f] + g[r])];
  }
  return eta;
}

ParameterLayout layout_of(const Design& design, const FitResult& fit) {
  return fit.random_effects ? ParameterLayout::with_families(design) : ParameterLayout::fixed_only(design);
}

namespace {

void add_row(const EventBlock& b, const ParameterLayout& layout, std::size_t r, double w, VectorXd& v) {
  const auto p = static_cast<Eigen::Index>(layout.fixed);
  v.head(p) += w * b.x.row(static_cast<Eigen::Index>(r)).transpose();
  for (std::size_t f = 0; f < layout.offsets.size(); ++f) {
    const auto g = b.groups[f][r];
    if (g >= 0) v[static_cast<Eigen::Index>(layout.offsets[f] + g)] += w;
  }
}

// One block's contribution. With a_j = j/d (Efron) or 0 (Breslow) the
// denominators are D_j = S0 - a_j E0, which covers both tie rules.
void accumulate_block(const EventBlock& b, const ParameterLayout& layout, const VectorXd& theta, Ties ties,
                      bool hessian, Evaluation& acc) {
  if (b.event_rows.empty()) return;
  if (!b.x.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite covariate value in the risk set at time " << b.time;
    throw InputError(msg.str());
  }
  const auto P = static_cast<Eigen::Index>(layout.total());
  const auto p = static_cast<Eigen::Index>(layout.fixed);
  const auto n = static_cast<Eigen::Index>(b.dyads.size());

  VectorXd eta = linear_predictor(b, layout, theta);
  const double m = eta.maxCoeff();
  VectorXd w = (eta.array() - m).exp().matrix();
  const double S0 = w.sum();
  double E0 = 0.0;
  double eta_events = 0.0;
  for (auto e : b.event_rows) {
    E0 += w[e];
    eta_events += eta[e];
  }

  const auto d = b.event_rows.size();
  double logsum = 0.0, c1 = 0.0, c2 = 0.0, c11 = 0.0, c12 = 0.0, c22 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double a = ties == Ties::efron ? static_cast<double>(j) / static_cast<double>(d) : 0.0;
    const double D = S0 - a * E0;
    logsum += std::log(D) + m;
    c1 += 1.0 / D;
    c2 += a / D;
    c11 += 1.0 / (D * D);
    c12 += a / (D * D);
    c22 += a * a / (D * D);
  }
  acc.loglik += eta_events - logsum;

  VectorXd S1 = VectorXd::Zero(P), E1 = VectorXd::Zero(P), Z = VectorXd::Zero(P);
  S1.head(p) = b.x.transpose() * w;
  for (std::size_t f = 0; f < layout.offsets.size(); ++f) {
    const auto& g = b.groups[f];
    for (Eigen::Index r = 0; r < n; ++r)
      if (g[static_cast<std::size_t>(r)] >= 0) S1[static_cast<Eigen::Index>(layout.offsets[f] + g[static_cast<std::size_t>(r)])] += w[r];
  }
  for (auto e : b.event_rows) {
    add_row(b, layout, static_cast<std::size_t>(e), w[e], E1);
    add_row(b, layout, static_cast<std::size_t>(e), 1.0, Z);
  }
  acc.score += Z - c1 * S1 + c2 * E1;
  if (!hessian) return;

  // Weighted second moments: sum_r omega_r z_r z_r'.
  VectorXd omega = c1 * w;
  for (auto e : b.event_rows) omega[e] -= c2 * w[e];
  auto& I = acc.information;
  I.topLeftCorner(p, p).noalias() += b.x.transpose() * omega.asDiagonal() * b.x;
  const std::size_t F = layout.offsets.size();
  if (F > 0) {
    std::vector<Eigen::Index> idx(F);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto rr = static_cast<std::size_t>(r);
      for (std::size_t f = 0; f < F; ++f) {
        const auto g = b.groups[f][rr];
        idx[f] = g >= 0 ? static_cast<Eigen::Index>(layout.offsets[f] + g) : -1;
      }
      for (std::size_t f = 0; f < F; ++f) {
        if (idx[f] < 0) continue;
        const auto k = idx[f];
        I.block(0, k, p, 1) += omega[r] * b.x.row(r).transpose();
        I.block(k, 0, 1, p) += omega[r] * b.x.row(r);
        I(k, k) += omega[r];
        for (std::size_t f2 = f + 1; f2 < F; ++f2) {
          if (idx[f2] < 0) continue;
          I(k, idx[f2]) += omega[r];
          I(idx[f2], k) += omega[r];
        }
      }
    }
  }
  I.noalias() -= c11 * S1 * S1.transpose();
  if (c12 != 0.0 || c22 != 0.0) {
    I.noalias() += c12 * (S1 * E1.transpose());
    I.noalias() += c12 * (E1 * S1.transpose());
    I.noalias() -= c22 * E1 * E1.transpose();
  }
}

Evaluation zero_evaluation(Eigen::Index P, bool hessian) {
  Evaluation e;
  e.score = VectorXd::Zero(P);
  e.information = hessian ? MatrixXd::Zero(P, P) : MatrixXd();
  return e;
}

// Blocks are split into a fixed number of contiguous chunks that does not
// depend on the thread count, and chunk results are summed in order, so the
// result is bitwise identical for any number of jobs.
std::size_t chunk_count(std::size_t blocks, Eigen::Index P, bool hessian) {
  std::size_t cap = 16;
  if (hessian) {
    const double bytes = 8.0 * static_cast<double>(P) * static_cast<double>(P);
    cap = std::clamp<std::size_t>(static_cast<std::size_t>(256e6 / std::max(bytes, 1.0)), 1, 16);
  }
  return std::max<std::size_t>(1, std::min(blocks, cap));
}

template <class Body>
void run_chunks(std::size_t chunks, int jobs, Body body) {
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || chunks == 1) {
    EventBlock scratch;
    for (std::size_t c = 0; c < chunks; ++c) body(c, scratch);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, chunks); ++t) {
    pool.emplace_back([&, t] {
      EventBlock scratch;
      try {
        for (std::size_t c; (c = next.fetch_add(1)) < chunks;) body(c, scratch);
      } catch (...) {
        errors[t] = std::current_exception();
        next.store(chunks);
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

Evaluation evaluate(const Design& design, const ParameterLayout& layout, const VectorXd& theta,
                    const EvalOptions& opts) {
  const auto P = static_cast<Eigen::Index>(layout.total());
  if (theta.size() != P) throw std::invalid_argument("parameter vector has the wrong length");
  const std::size_t K = design.block_count();
  const std::size_t chunks = chunk_count(K, P, opts.hessian);
  const std::size_t per = (K + chunks - 1) / std::max<std::size_t>(chunks, 1);

  std::vector<Evaluation> partial(chunks);
  run_chunks(chunks, opts.jobs, [&](std::size_t c, EventBlock& scratch) {
    partial[c] = zero_evaluation(P, opts.hessian);
    const std::size_t end = std::min(K, (c + 1) * per);
    for (std::size_t k = c * per; k < end; ++k)
      accumulate_block(design.block(k, scratch), layout, theta, opts.ties, opts.hessian, partial[c]);
  });

  Evaluation total = zero_evaluation(P, opts.hessian);
  for (const auto& e : partial) {
    if (e.score.size() == 0) continue;
    total.loglik += e.loglik;
    total.score += e.score;
    if (opts.hessian) total.information += e.information;
  }
  return total;
}

double partial_loglik(const Design& design, const VectorXd& beta, Ties ties) {
  return evaluate(design, ParameterLayout::fixed_only(design), beta, {ties, false, 1}).loglik;
}

std::pair<VectorXd, MatrixXd> score_and_hessian(const Design& design, const VectorXd& beta, Ties ties) {
  auto e = evaluate(design, ParameterLayout::fixed_only(design), beta, {ties, true, 1});
  return {std::move(e.score), std::move(e.information)};
}

VectorXd event_probabilities(const EventBlock& block, const VectorXd& beta) {
  VectorXd eta = block.x * beta;
  const double m = eta.maxCoeff();
  VectorXd w = (eta.array() - m).exp().matrix();
  return w / w.sum();
}

double BaselineHazard::cumulative_at(double t) const {
  auto it = std::upper_bound(points.begin(), points.end(), t,
                             [](double v, const BaselinePoint& p) { return v < p.time; });
  if (it == points.begin()) return 0.0;
  return std::prev(it)->cumulative;
}

namespace {

// Zero or collinear fixed-effect columns make the information singular. The
// check runs on the correlation-scaled matrix so units do not matter.
void check_rank(const MatrixXd& info, const std::vector<ColumnInfo>& cols) {
  const auto p = info.rows();
  if (p == 0) return;
  const double top = info.diagonal().cwiseAbs().maxCoeff();
  std::vector<std::string> flat;
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(info(j, j) > 1e-12 * std::max(top, 1e-300))) flat.push_back(cols[static_cast<std::size_t>(j)].name);
  if (!flat.empty()) {
    std::string names;
    for (const auto& n : flat) names += (names.empty() ? "" : ", ") + n;
    throw RankDeficiencyError("rank-deficient design: no variation within risk sets for " + names);
  }
  VectorXd s = info.diagonal().cwiseSqrt().cwiseInverse();
  MatrixXd scaled = s.asDiagonal() * info * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(scaled);
  const auto& ev = eig.eigenvalues();
  if (ev[0] > 1e-10 * ev[p - 1]) return;
  VectorXd v = eig.eigenvectors().col(0);
  std::string names;
  for (Eigen::Index j = 0; j < p; ++j)
    if (std::abs(v[j]) > 0.1) names += (names.empty() ? "" : ", ") + cols[static_cast<std::size_t>(j)].name;
  throw RankDeficiencyError("rank-deficient design: collinear columns " + names);
}

struct NewtonResult {
  VectorXd theta;
  Evaluation eval;  // unpenalized, at theta
  double objective = 0.0;
  double start_loglik = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

// Maximizes loglik - 0.5 * sum(penalty_i * theta_i^2) by Newton steps with
// step halving; a step is only taken if the objective does not decrease.
NewtonResult maximize(const Design& design, const ParameterLayout& layout, const VectorXd& penalty, VectorXd theta,
                      const FitOptions& opts, bool rank_check) {
  const EvalOptions eo{opts.ties, true, opts.jobs};
  auto objective = [&](const Evaluation& e, const VectorXd& th) {
    return e.loglik - 0.5 * (penalty.array() * th.array().square()).sum();
  };

  NewtonResult res;
  res.eval = evaluate(design, layout, theta, eo);
  res.start_loglik = res.eval.loglik;
  if (rank_check) {
    const auto p = static_cast<Eigen::Index>(layout.fixed);
    check_rank(res.eval.information.topLeftCorner(p, p), design.columns());
  }
  double f = objective(res.eval, theta);
  std::vector<double> trace{f};

  auto fail = [&](const std::string& why) {
    std::ostringstream msg;
    msg << why << "; objective trace:";
    for (std::size_t i = trace.size() > 10 ? trace.size() - 10 : 0; i < trace.size(); ++i) msg << ' ' << trace[i];
    throw ConvergenceError(msg.str());
  };

  auto grad = [&](const Evaluation& e, const VectorXd& th) {
    return VectorXd(e.score - (penalty.array() * th.array()).matrix());
  };
  VectorXd g = grad(res.eval, theta);
  for (int it = 0;; ++it) {
    const double gn = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    res.gradient_norm = gn;
    res.iterations = it;
    if (!std::isfinite(f) || !g.allFinite()) fail("non-finite log-likelihood");

    MatrixXd H = res.eval.information;
    H.diagonal() += penalty;
    VectorXd delta;
    Eigen::LLT<MatrixXd> llt(H);
    const bool definite = llt.info() == Eigen::Success;
    if (definite) {
      delta = llt.solve(g);
    } else {
      // Indefinite far from the optimum: fall back to a ridge-damped step.
      double ridge = 1e-8 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
      for (;;) {
        MatrixXd Hr = H;
        Hr.diagonal().array() += ridge;
        Eigen::LLT<MatrixXd> l2(Hr);
        if (l2.info() == Eigen::Success) {
          delta = l2.solve(g);
          break;
        }
        ridge *= 10.0;
        if (!std::isfinite(ridge)) fail("information matrix is not positive definite");
      }
    }
    // A flat gradient alone is not enough: under separation the gradient
    // vanishes while Newton keeps proposing unit-sized steps.
    const double scale = 1.0 + (theta.size() ? theta.cwiseAbs().maxCoeff() : 0.0);
    const double step_norm = delta.size() ? delta.cwiseAbs().maxCoeff() : 0.0;
    if (gn < opts.gradient_tol && step_norm < 1e-6 * scale) {
      if (!definite) fail("information is singular at the estimate (monotone likelihood)");
      break;
    }
    if (it >= opts.max_iterations) fail("no convergence after " + std::to_string(opts.max_iterations) + " iterations");

    // g'delta approximates twice the attainable gain. Below ~1e-10 relative
    // the objective cannot resolve progress, so a shrinking gradient decides.
    const double decrement = g.dot(delta);
    const bool noise = decrement >= 0.0 && decrement < 1e-10 * (1.0 + std::abs(f));
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      VectorXd cand = theta + step * delta;
      Evaluation ce = evaluate(design, layout, cand, eo);
      const double fc = objective(ce, cand);
      if (!std::isfinite(fc)) continue;
      VectorXd gc = grad(ce, cand);
      if (fc >= f || (noise && gc.cwiseAbs().maxCoeff() < gn)) {
        theta = std::move(cand);
        res.eval = std::move(ce);
        g = std::move(gc);
        f = fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (noise && decrement < 1e-12 * (1.0 + std::abs(f))) break;  // at the floor of double precision
      fail("step halving failed to improve the objective");
    }
    trace.push_back(f);
  }
  res.theta = std::move(theta);
  res.objective = f;
  return res;
}

double normal_two_sided(double z) {
  if (!std::isfinite(z)) return std::isnan(z) ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  static const boost::math::normal N;
  return 2.0 * boost::math::cdf(boost::math::complement(N, std::abs(z)));
}

std::vector<Coefficient> make_coefficients(const Design& design, const VectorXd& beta, const MatrixXd& cov) {
  std::vector<Coefficient> out;
  for (std::size_t j = 0; j < design.column_count(); ++j) {
    const auto& c = design.columns()[j];
    const auto jj = static_cast<Eigen::Index>(j);
    Coefficient k;
    k.name = c.name;
    k.base = c.base;
    k.unit = c.unit;
    k.period = c.period;
    k.period_begin = c.period_begin;
    k.period_end = c.period_end;
    k.estimate = beta[jj];
    k.se = std::sqrt(std::max(0.0, cov(jj, jj)));
    k.z = k.estimate / k.se;
    k.p = normal_two_sided(k.z);
    out.push_back(std::move(k));
  }
  return out;
}

MatrixXd invert_spd(const MatrixXd& H) {
  const auto n = H.rows();
  Eigen::LLT<MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    Eigen::LDLT<MatrixXd> ldlt(H);
    return ldlt.solve(MatrixXd::Identity(n, n));
  }
  return llt.solve(MatrixXd::Identity(n, n));
}

VectorXd penalty_vector(const ParameterLayout& layout, std::span<const double> sigmas) {
  VectorXd pen = VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));
  for (std::size_t f = 0; f < layout.offsets.size(); ++f)
    pen.segment(static_cast<Eigen::Index>(layout.offsets[f]), static_cast<Eigen::Index>(layout.sizes[f]))
        .setConstant(1.0 / (sigmas[f] * sigmas[f]));
  return pen;
}

// Laplace approximation of the integrated log-likelihood at the penalized
// mode: f(theta) - 0.5 log det(I + D I_bb D), D = diag(sigma).
double laplace_loglik(const NewtonResult& nr, const ParameterLayout& layout, std::span<const double> sigmas) {
  const auto p = static_cast<Eigen::Index>(layout.fixed);
  const auto q = static_cast<Eigen::Index>(layout.total()) - p;
  if (q == 0) return nr.objective;
  VectorXd s(q);
  for (std::size_t f = 0; f < layout.offsets.size(); ++f)
    s.segment(static_cast<Eigen::Index>(layout.offsets[f]) - p, static_cast<Eigen::Index>(layout.sizes[f]))
        .setConstant(sigmas[f]);
  MatrixXd M = s.asDiagonal() * nr.eval.information.bottomRightCorner(q, q) * s.asDiagonal();
  M.diagonal().array() += 1.0;
  Eigen::LLT<MatrixXd> llt(M);
  double logdet = 0.0;
  if (llt.info() == Eigen::Success) {
    logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  } else {
    Eigen::LDLT<MatrixXd> ldlt(M);
    logdet = ldlt.vectorD().array().abs().log().sum();
  }
  return nr.objective - 0.5 * logdet;
}

VectorXd initial_theta(const ParameterLayout& layout, const FitOptions& opts) {
  VectorXd theta = VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));
  if (opts.init) {
    const auto n = std::min<Eigen::Index>(opts.init->size(), theta.size());
    theta.head(n) = opts.init->head(n);
  }
  return theta;
}

double null_loglik(const Design& design, const FitOptions& opts) {
  const auto layout = ParameterLayout::fixed_only(design);
  return evaluate(design, layout, VectorXd::Zero(static_cast<Eigen::Index>(layout.fixed)),
                  {opts.ties, false, opts.jobs})
      .loglik;
}

FitResult penalized_fit(const Design& design, std::span<const double> sigmas, const FitOptions& opts,
                        const VectorXd& start, double& laplace, bool rank_check) {
  const auto layout = ParameterLayout::with_families(design);
  if (sigmas.size() != layout.offsets.size())
    throw std::invalid_argument("one standard deviation is needed per random-effect family");
  const VectorXd pen = penalty_vector(layout, sigmas);
  NewtonResult nr = maximize(design, layout, pen, start, opts, rank_check);
  laplace = laplace_loglik(nr, layout, sigmas);

  FitResult fit;
  fit.random_effects = true;
  fit.ties = opts.ties;
  fit.theta = nr.theta;
  const auto p = static_cast<Eigen::Index>(layout.fixed);
  fit.beta = nr.theta.head(p);
  fit.loglik_partial = nr.eval.loglik;
  fit.loglik_penalized = nr.objective;
  fit.loglik_model = laplace;
  fit.n_events = design.event_count();
  fit.convergence = {nr.iterations, nr.gradient_norm, 0};

  MatrixXd H = nr.eval.information;
  H.diagonal() += pen;
  MatrixXd V = invert_spd(H);
  fit.covariance = V.topLeftCorner(p, p);
  fit.coefficients = make_coefficients(design, fit.beta, fit.covariance);
  for (std::size_t f = 0; f < layout.offsets.size(); ++f) {
    const auto& fam = design.families()[f];
    for (std::size_t g = 0; g < layout.sizes[f]; ++g) {
      const auto k = static_cast<Eigen::Index>(layout.offsets[f] + g);
      if (!(nr.eval.information(k, k) > 0.0)) continue;  // group never at risk
      fit.frailties.push_back({fam.name, fam.labels[g], nr.theta[k], std::sqrt(std::max(0.0, V(k, k)))});
    }
  }
  return fit;
}

}  // namespace

FitResult fit_fixed(const Design& design, const FitOptions& opts) {
  const auto layout = ParameterLayout::fixed_only(design);
  NewtonResult nr = maximize(design, layout, VectorXd::Zero(static_cast<Eigen::Index>(layout.fixed)),
                             initial_theta(layout, opts), opts, true);
  FitResult fit;
  fit.ties = opts.ties;
  fit.theta = nr.theta;
  fit.beta = nr.theta;
  fit.loglik_null = opts.init ? null_loglik(design, opts) : nr.start_loglik;
  fit.loglik_partial = nr.eval.loglik;
  fit.loglik_penalized = nr.eval.loglik;
  fit.loglik_model = nr.eval.loglik;
  fit.n_events = design.event_count();
  fit.df = layout.fixed;
  fit.convergence = {nr.iterations, nr.gradient_norm, 0};
  fit.covariance = invert_spd(nr.eval.information);
  fit.coefficients = make_coefficients(design, fit.beta, fit.covariance);
  fit.baseline = breslow_baseline(design, fit, opts.jobs);
  return fit;
}

FitResult fit_penalized(const Design& design, std::span<const double> sigmas, const FitOptions& opts) {
  const auto layout = ParameterLayout::with_families(design);
  double laplace = 0.0;
  FitResult fit = penalized_fit(design, sigmas, opts, initial_theta(layout, opts), laplace, true);
  fit.loglik_null = null_loglik(design, opts);
  fit.df = layout.fixed + layout.offsets.size();
  for (std::size_t f = 0; f < sigmas.size(); ++f)
    fit.variance_components.push_back(
        {design.families()[f].name, sigmas[f], sigmas[f] <= opts.sigma_lower * 1.01, 0.0, 1.0});
  fit.baseline = breslow_baseline(design, fit, opts.jobs);
  return fit;
}

FitResult fit_mixed(const Design& design, const FitOptions& opts) {
  const auto layout = ParameterLayout::with_families(design);
  const std::size_t F = layout.offsets.size();
  if (F == 0) return fit_fixed(design, opts);

  // Fixed-effect starting values double as the rank check.
  FitOptions inner = opts;
  VectorXd warm = initial_theta(layout, opts);
  {
    FitResult fixed = fit_fixed(design, opts);
    warm.head(static_cast<Eigen::Index>(layout.fixed)) = fixed.beta;
  }

  std::vector<double> sigmas(F, std::clamp(opts.sigma_start, opts.sigma_lower, opts.sigma_upper));
  int evaluations = 0;
  auto profile = [&](const std::vector<double>& sig) {
    double la = 0.0;
    FitResult r = penalized_fit(design, sig, inner, warm, la, false);
    warm = r.theta;
    ++evaluations;
    return la;
  };

  const double lo = std::log(opts.sigma_lower), hi = std::log(opts.sigma_upper);
  for (int cycle = 0; cycle < opts.max_cycles; ++cycle) {
    double moved = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      auto trial = sigmas;
      auto neg = [&](double log_sigma) {
        trial[f] = std::exp(log_sigma);
        return -profile(trial);
      };
      boost::uintmax_t iters = 100;
      auto best = boost::math::tools::brent_find_minima(neg, lo, hi, 20, iters);
      moved = std::max(moved, std::abs(best.first - std::log(sigmas[f])));
      sigmas[f] = std::exp(best.first);
    }
    if (F == 1 || moved < opts.cycle_tol) break;
  }

  double laplace = 0.0;
  FitResult fit = penalized_fit(design, sigmas, inner, warm, laplace, false);
  fit.loglik_null = null_loglik(design, opts);
  fit.df = layout.fixed + F;
  fit.convergence.outer_evaluations = evaluations;

  // Each variance component against the same model with that SD at the floor.
  static const boost::math::chi_squared chi1(1.0);
  for (std::size_t f = 0; f < F; ++f) {
    VarianceComponent vc;
    vc.family = design.families()[f].name;
    vc.sigma = sigmas[f];
    vc.at_lower_bound = sigmas[f] <= opts.sigma_lower * 1.01;
    auto reduced = sigmas;
    reduced[f] = opts.sigma_lower;
    double la0 = 0.0;
    penalized_fit(design, reduced, inner, fit.theta, la0, false);
    vc.lr_chisq = std::max(0.0, 2.0 * (laplace - la0));
    vc.p_value = vc.lr_chisq > 0.0 ? 0.5 * boost::math::cdf(boost::math::complement(chi1, vc.lr_chisq)) : 1.0;
    fit.variance_components.push_back(vc);
  }
  fit.baseline = breslow_baseline(design, fit, opts.jobs);
  return fit;
}

BaselineHazard breslow_baseline(const Design& design, const FitResult& fit, int jobs) {
  const auto layout = layout_of(design, fit);
  const std::size_t K = design.block_count();
  std::vector<BaselinePoint> pts(K);
  std::vector<char> used(K, 0);
  const std::size_t chunks = chunk_count(K, 0, false);
  const std::size_t per = (K + chunks - 1) / std::max<std::size_t>(chunks, 1);
  run_chunks(chunks, jobs, [&](std::size_t c, EventBlock& scratch) {
    const std::size_t end = std::min(K, (c + 1) * per);
    for (std::size_t k = c * per; k < end; ++k) {
      const EventBlock& b = design.block(k, scratch);
      if (b.event_rows.empty()) continue;
      VectorXd eta = linear_predictor(b, layout, fit.theta);
      const double m = eta.maxCoeff();
      const double S0 = (eta.array() - m).exp().sum();
      pts[k].time = b.time;
      pts[k].increment = static_cast<double>(b.event_rows.size()) * std::exp(-m) / S0;
      used[k] = 1;
    }
  });

  BaselineHazard h;
  const double t0 = design.window().begin;
  if (K == 0 || !used[0] || pts[0].time > t0) h.points.push_back({t0, 0.0, 0.0});
  double cum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!used[k]) continue;
    cum += pts[k].increment;
    pts[k].cumulative = cum;
    h.points.push_back(pts[k]);
  }
  return h;
}

}  // namespace rem
