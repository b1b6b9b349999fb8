#include "rem/fit_io.hpp"

#include <algorithm>
#include <cmath>

#include "rem/errors.hpp"
#include "rem/ingest.hpp"

namespace rem {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return std::isnan(v) ? "NA" : format_double(v); }

double read_num(const CsvTable& t, std::size_t r, std::size_t c) {
  return t.rows[r][c] == "NA" ? std::numeric_limits<double>::quiet_NaN() : parse_double(t, r, c);
}

}  // namespace

std::vector<Frailty> ranked_frailties(const FitResult& fit, const std::string& family) {
  std::vector<Frailty> out;
  for (const auto& f : fit.frailties)
    if (f.family == family) out.push_back(f);
  std::stable_sort(out.begin(), out.end(), [](const Frailty& a, const Frailty& b) { return a.estimate > b.estimate; });
  return out;
}

void write_fit(const fs::path& dir, const FitResult& fit, const std::map<std::string, double>& per_unit) {
  fs::create_directories(dir);
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : fit.coefficients)
      rows.push_back({c.name, c.base, std::to_string(c.period), num(c.period_begin), num(c.period_end), c.unit,
                      num(c.estimate), num(c.se), num(c.z), num(c.p)});
    write_csv(dir / "coefficients.csv",
              {"name", "covariate", "period", "period_begin", "period_end", "unit", "estimate", "se", "z", "p"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& v : fit.variance_components)
      rows.push_back({v.family, num(v.sigma), v.at_lower_bound ? "true" : "false", num(v.lr_chisq), num(v.p_value)});
    write_csv(dir / "variance_components.csv", {"family", "sigma", "at_lower_bound", "lr_chisq", "p"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& v : fit.variance_components) {
      const auto ranked = ranked_frailties(fit, v.family);
      for (std::size_t i = 0; i < ranked.size(); ++i)
        rows.push_back({v.family, std::to_string(i + 1), ranked[i].label, num(ranked[i].estimate), num(ranked[i].se)});
    }
    write_csv(dir / "frailties.csv", {"family", "rank", "label", "estimate", "se"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : fit.baseline.points) rows.push_back({num(p.time), num(p.increment), num(p.cumulative)});
    write_csv(dir / "baseline.csv", {"time", "increment", "cumulative"}, rows);
  }
  {
    std::vector<std::string> header{"name"};
    for (const auto& c : fit.coefficients) header.push_back(c.name);
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i) {
      std::vector<std::string> r{fit.coefficients[static_cast<std::size_t>(i)].name};
      for (Eigen::Index j = 0; j < fit.covariance.cols(); ++j) r.push_back(num(fit.covariance(i, j)));
      rows.push_back(std::move(r));
    }
    write_csv(dir / "covariance.csv", header, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& h : hazard_ratio_report(fit, per_unit))
      rows.push_back({h.name, num(h.delta), num(h.multiplier), num(h.lower), num(h.upper), num(h.percent_change)});
    write_csv(dir / "hazard_ratios.csv", {"name", "per_unit", "multiplier", "lower", "upper", "percent_change"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < fit.theta.size(); ++i) rows.push_back({std::to_string(i), num(fit.theta[i])});
    write_csv(dir / "theta.csv", {"index", "value"}, rows);
  }
  {
    const auto ic = information_criteria(fit);
    std::vector<std::vector<std::string>> rows{
        {"ties", to_string(fit.ties)},
        {"random_effects", fit.random_effects ? "true" : "false"},
        {"n_events", std::to_string(fit.n_events)},
        {"df", std::to_string(fit.df)},
        {"loglik_null", num(fit.loglik_null)},
        {"loglik_model", num(fit.loglik_model)},
        {"loglik_partial", num(fit.loglik_partial)},
        {"loglik_penalized", num(fit.loglik_penalized)},
        {"r_squared_percent", num(r_squared(fit))},
        {"aic", num(ic.aic)},
        {"bic", num(ic.bic)},
        {"aic_gain_over_null", num(ic.aic_gain)},
        {"bic_gain_over_null", num(ic.bic_gain)},
        {"iterations", std::to_string(fit.convergence.iterations)},
        {"gradient_norm", num(fit.convergence.gradient_norm)},
        {"outer_evaluations", std::to_string(fit.convergence.outer_evaluations)},
    };
    write_csv(dir / "summary.csv", {"key", "value"}, rows);
  }
}

FitResult read_fit(const fs::path& dir) {
  if (!fs::exists(dir / "summary.csv")) throw InputError("no fit found in " + dir.string() + " (run 'fit' first)");
  FitResult fit;
  {
    const auto t = read_csv(dir / "summary.csv", {"key", "value"});
    std::map<std::string, std::size_t> at;
    for (std::size_t r = 0; r < t.rows.size(); ++r) at[t.rows[r][0]] = r;
    auto get = [&](const std::string& k) -> std::size_t {
      auto it = at.find(k);
      if (it == at.end()) throw InputError(t.path + ": missing key '" + k + "'");
      return it->second;
    };
    fit.ties = parse_ties(t.rows[get("ties")][1]);
    fit.random_effects = t.rows[get("random_effects")][1] == "true";
    fit.n_events = static_cast<std::size_t>(parse_double(t, get("n_events"), 1));
    fit.df = static_cast<std::size_t>(parse_double(t, get("df"), 1));
    fit.loglik_null = read_num(t, get("loglik_null"), 1);
    fit.loglik_model = read_num(t, get("loglik_model"), 1);
    fit.loglik_partial = read_num(t, get("loglik_partial"), 1);
    fit.loglik_penalized = read_num(t, get("loglik_penalized"), 1);
    fit.convergence.iterations = static_cast<int>(parse_double(t, get("iterations"), 1));
    fit.convergence.gradient_norm = read_num(t, get("gradient_norm"), 1);
    fit.convergence.outer_evaluations = static_cast<int>(parse_double(t, get("outer_evaluations"), 1));
  }
  {
    const auto t = read_csv(dir / "coefficients.csv",
                            {"name", "covariate", "period", "period_begin", "period_end", "unit", "estimate", "se", "z", "p"});
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      Coefficient c;
      c.name = t.rows[r][t.column("name")];
      c.base = t.rows[r][t.column("covariate")];
      c.period = static_cast<int>(parse_double(t, r, t.column("period")));
      c.period_begin = read_num(t, r, t.column("period_begin"));
      c.period_end = read_num(t, r, t.column("period_end"));
      c.unit = t.rows[r][t.column("unit")];
      c.estimate = read_num(t, r, t.column("estimate"));
      c.se = read_num(t, r, t.column("se"));
      c.z = read_num(t, r, t.column("z"));
      c.p = read_num(t, r, t.column("p"));
      fit.coefficients.push_back(c);
    }
  }
  const auto p = static_cast<Eigen::Index>(fit.coefficients.size());
  fit.beta.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) fit.beta[j] = fit.coefficients[static_cast<std::size_t>(j)].estimate;
  {
    const auto t = read_csv(dir / "covariance.csv", {"name"});
    if (static_cast<Eigen::Index>(t.rows.size()) != p || static_cast<Eigen::Index>(t.header.size()) != p + 1)
      throw InputError(t.path + ": covariance does not match the coefficient table");
    fit.covariance.resize(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        fit.covariance(i, j) = read_num(t, static_cast<std::size_t>(i), static_cast<std::size_t>(j + 1));
  }
  {
    const auto t = read_csv(dir / "theta.csv", {"index", "value"});
    fit.theta.resize(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) fit.theta[static_cast<Eigen::Index>(r)] = read_num(t, r, 1);
    if (fit.theta.size() < p || fit.theta.head(p) != fit.beta)
      throw InputError(t.path + ": parameter vector does not match the coefficient table");
  }
  {
    const auto t = read_csv(dir / "variance_components.csv", {"family", "sigma", "at_lower_bound", "lr_chisq", "p"});
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      fit.variance_components.push_back({t.rows[r][0], read_num(t, r, 1), t.rows[r][2] == "true", read_num(t, r, 3),
                                         read_num(t, r, 4)});
  }
  {
    const auto t = read_csv(dir / "frailties.csv", {"family", "rank", "label", "estimate", "se"});
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      fit.frailties.push_back({t.rows[r][0], t.rows[r][2], read_num(t, r, 3), read_num(t, r, 4)});
  }
  {
    const auto t = read_csv(dir / "baseline.csv", {"time", "increment", "cumulative"});
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      fit.baseline.points.push_back({read_num(t, r, 0), read_num(t, r, 1), read_num(t, r, 2)});
  }
  return fit;
}

void write_residuals(const fs::path& path, const ResidualSet& res, const NodeIndex& species, const NodeIndex& regions) {
  std::vector<std::string> header{"time", "species", "region"};
  for (const char* kind : {"r_", "scaled_", "dfbeta_"})
    for (const auto& c : res.columns) header.push_back(kind + c);
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index i = 0; i < res.schoenfeld.rows(); ++i) {
    const auto& d = res.event_dyads[static_cast<std::size_t>(i)];
    std::vector<std::string> r{num(res.event_times[static_cast<std::size_t>(i)]), species.name(d.species.value),
                               regions.name(d.region.value)};
    for (const auto* m : {&res.schoenfeld, &res.scaled, &res.dfbeta})
      for (Eigen::Index j = 0; j < m->cols(); ++j) r.push_back(num((*m)(i, j)));
    rows.push_back(std::move(r));
  }
  write_csv(path, header, rows);
}

void write_ph_test(const fs::path& dir, const PhTestResult& t) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : t.rows)
    rows.push_back({r.column, r.testable ? "true" : "false", num(r.rho), num(r.chisq), r.testable ? "1" : "0", num(r.p)});
  rows.push_back({"GLOBAL", t.global_df > 0 ? "true" : "false", "NA", num(t.global_chisq), std::to_string(t.global_df),
                  num(t.global_p)});
  write_csv(dir / "ph_test.csv", {"column", "testable", "rho", "chisq", "df", "p"}, rows);

  std::vector<std::vector<std::string>> trend;
  for (std::size_t j = 0; j < t.trends.size(); ++j)
    for (const auto& p : t.trends[j]) trend.push_back({t.rows[j].column, num(p.time), num(p.residual), num(p.trend)});
  write_csv(dir / "ph_trend.csv", {"column", "time", "scaled_residual", "smoothed"}, trend);
}

void write_correlations(const fs::path& path, const CorrelationMatrix& m) {
  std::vector<std::string> header{"column"};
  for (const auto& c : m.columns) header.push_back(c);
  header.push_back("flag_over_threshold");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < m.columns.size(); ++i) {
    std::vector<std::string> r{m.columns[i]};
    bool flagged = false;
    for (std::size_t j = 0; j < m.columns.size(); ++j) {
      r.push_back(num(m.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      for (const auto& [a, b] : m.flagged) flagged = flagged || a == i || b == i;
    }
    r.push_back(flagged ? "true" : "false");
    rows.push_back(std::move(r));
  }
  write_csv(path, header, rows);
}

}  // namespace rem
