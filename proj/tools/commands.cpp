#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>

#include "rem/covariates.hpp"
#include "rem/diagnostics.hpp"
#include "rem/errors.hpp"
#include "rem/estimator.hpp"
#include "rem/event_core.hpp"
#include "rem/fit_io.hpp"
#include "rem/ingest.hpp"
#include "rem/simulator.hpp"

namespace remcli {

using namespace rem;
namespace fs = std::filesystem;

namespace {

constexpr const char* kEngine = "remfit 1.0";

template <class T>
const T& need(const std::optional<T>& v, const char* key) {
  if (!v) throw InputError("config needs '" + std::string(key) + "'");
  return *v;
}

void need_file(const std::optional<fs::path>& p) {
  if (p && !fs::exists(*p)) throw InputError("file not found: " + p->string());
}

std::string data_section(const RunConfig& cfg) {
  const auto text = canonical_config(cfg);
  return text.substr(0, text.find("\n[model]"));
}

std::vector<std::string> decisions(const RunConfig& cfg) {
  const auto& m = cfg.model;
  return {
      std::string("ties: ") + to_string(m.ties),
      "risk set: every (species, region) pair not yet occupied just before the event time; tied events share it",
      std::string("last invader outside the top species: ") + (m.last_invader == LastInvaderRule::skip ? "skip" : "reset"),
      std::string("trade/temperature sources: ") + (m.source_regions == SourceRegions::occupied ? "all occupied regions"
                                                                                              : "invaded regions only"),
      "trade gaps: least-squares line on log(usd+1); zero-start series keep leading zeros; absent pairs are 0",
      "land cover: linear between anchor years, held constant outside",
      "newton: converged when max|score| < 1e-8 and the step is < 1e-6 (1 + max|theta|)",
      "variance components: Laplace-approximate marginal likelihood, Brent search on log sigma, coordinate-wise",
      "variance-component test: 50:50 mixture of chi2(0) and chi2(1)",
      "baseline: Breslow increments at the estimate (frailties included)",
      "R^2: 1 - exp(-(2/n)(l_model - l_null)) with n = number of events",
  };
}

void write_manifest(const fs::path& path, const RunConfig& cfg, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  const auto text = canonical_config(cfg);
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "; written by " << kEngine << "; rerun with: remfit " << command << " --config <this file>\n";
  out << text << "\n[manifest]\ncommand = " << command << "\nconfig_hash = " << fnv1a_hex(text)
      << "\ndata_hash = " << fnv1a_hex(data_section(cfg)) << "\nengine = " << kEngine << "\n";
  for (const auto& [k, v] : extra) out << k << " = " << v << "\n";
  const auto d = decisions(cfg);
  for (std::size_t i = 0; i < d.size(); ++i) out << "decision_" << (i + 1) << " = " << d[i] << "\n";
}

RegionResolver resolver_from(const RunConfig& cfg) {
  if (cfg.regions) {
    const auto t = read_csv(*cfg.regions, {"region_id"});
    std::set<std::string> names;
    for (const auto& r : t.rows) names.insert(r[t.column("region_id")]);
    RegionResolver res(NodeIndex(std::vector<std::string>(names.begin(), names.end())));
    if (cfg.aliases) {
      const auto a = read_csv(*cfg.aliases, {"alias", "region_id"});
      for (const auto& r : a.rows) res.add_alias(r[a.column("alias")], r[a.column("region_id")]);
    }
    return res;
  }
  return load_regions(need(cfg.distance, "data.distance or data.regions"), cfg.aliases);
}

std::pair<int, int> panel_years(const Window& w) {
  return {static_cast<int>(std::floor(w.begin)), static_cast<int>(std::floor(w.end))};
}

// Raw per-(species, region) covariates keyed by names, as read from a table.
struct DyadTable {
  std::vector<std::string> names;
  std::vector<std::tuple<std::string, std::string, std::vector<double>>> rows;  // species, canonical region, values
};

DyadTable read_dyad_table(const fs::path& path, const RegionResolver& res) {
  const auto t = read_csv(path, {"species_id", "region_id"});
  DyadTable d;
  const auto cs = t.column("species_id"), cr = t.column("region_id");
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (j != cs && j != cr) {
      cols.push_back(j);
      d.names.push_back(t.header[j]);
    }
  if (cols.empty()) throw InputError(path.string() + ": no covariate columns");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto c = res.require(t, i, cr);
    std::vector<double> v;
    for (auto j : cols) v.push_back(parse_double(t, i, j));
    d.rows.emplace_back(t.rows[i][cs], res.regions().name(c.value), std::move(v));
  }
  return d;
}

void write_dyad_table(const fs::path& path, const DyadTable& d) {
  std::vector<std::string> header{"species_id", "region_id"};
  header.insert(header.end(), d.names.begin(), d.names.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& [s, c, v] : d.rows) {
    std::vector<std::string> r{s, c};
    for (double x : v) r.push_back(format_double(x));
    rows.push_back(std::move(r));
  }
  write_csv(path, header, rows);
}

void write_region_list(const fs::path& path, const NodeIndex& regions) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& n : regions.names()) rows.push_back({n});
  write_csv(path, {"region_id"}, rows);
}

// Everything a fit needs, rebuilt from the prepared cache.
struct Prepared {
  RegionResolver res;
  std::vector<FirstRecord> records;
  std::vector<NativeRange> natives;
  EventData data;
  CovariatePanels panels;
  bool has_panels = false;
  std::unique_ptr<StaticDyadCovariates> dyad;
  std::unique_ptr<PanelCovariates> panel_source;
  const CovariateSource* source = nullptr;
};

std::vector<std::string> base_names(const ModelSpec& m) {
  std::vector<std::string> out;
  for (const auto& c : m.covariates)
    if (std::find(out.begin(), out.end(), c.name) == out.end()) out.push_back(c.name);
  return out;
}

std::unique_ptr<Prepared> load_prepared(const RunConfig& cfg) {
  const auto cache = cfg.output / "cache";
  if (!fs::exists(cache / "manifest.ini"))
    throw InputError("no prepared data in " + cache.string() + "; run 'prepare' first");
  {
    const auto m = load_config(cache / "manifest.ini");
    if (data_section(m) != data_section(cfg))
      throw InputError("the cache in " + cache.string() + " was prepared from a different [data] section; rerun 'prepare'");
  }
  auto p = std::make_unique<Prepared>();
  RunConfig local;
  local.regions = cache / "regions.csv";
  p->res = resolver_from(local);
  p->records = load_first_records(cache / "first_records.csv", p->res);
  p->natives = load_natives(cache / "natives.csv", p->res);
  p->data = build_event_sequence(p->records, cfg.window, p->natives, p->res.regions());

  if (fs::exists(cache / "distance.csv")) {
    PanelPaths paths{cache / "distance.csv", {}, {}, {}, {}};
    for (auto [slot, file] : {std::pair{&paths.trade, "trade.csv"}, {&paths.temperature, "temperature.csv"},
                              {&paths.landcover, "landcover.csv"}, {&paths.empires, "empires.csv"}})
      if (fs::exists(cache / file)) *slot = cache / file;
    const auto [y0, y1] = panel_years(cfg.window);
    p->panels = load_panels(paths, p->res, y0, y1, p->records, p->natives);
    p->has_panels = true;
  }
  if (fs::exists(cache / "dyad_covariates.csv")) {
    const auto table = read_dyad_table(cache / "dyad_covariates.csv", p->res);
    const auto& seq = p->data.sequence;
    const auto nS = seq.species().size(), nR = seq.regions().size();
    p->dyad = std::make_unique<StaticDyadCovariates>(nS, nR, table.names);
    std::vector<char> seen(nS * nR, 0);
    for (const auto& [s, c, v] : table.rows) {
      const auto si = seq.species().find(s);
      if (si < 0) continue;  // species without events
      const auto ci = seq.regions().find(c);
      for (std::size_t j = 0; j < v.size(); ++j) p->dyad->at(SpeciesId{si}, RegionId{ci}, j) = v[j];
      seen[static_cast<std::size_t>(si) * nR + static_cast<std::size_t>(ci)] = 1;
    }
    for (std::size_t k = 0; k < seen.size(); ++k)
      if (!seen[k])
        throw InputError("dyad_covariates has no row for species '" + seq.species().name(static_cast<int>(k / nR)) +
                         "' in region '" + seq.regions().name(static_cast<int>(k % nR)) + "'");
  }

  const auto names = base_names(cfg.model);
  if (names.empty()) throw InputError("config needs 'model.covariates'");
  bool all_dyad = p->dyad != nullptr;
  if (p->dyad) {
    std::set<std::string> have;
    for (std::size_t j = 0; j < p->dyad->dimension(); ++j) have.insert(p->dyad->name(j));
    for (const auto& n : names) all_dyad = all_dyad && have.count(n);
  }
  if (all_dyad) {
    p->source = p->dyad.get();
  } else {
    if (!p->has_panels)
      throw InputError("covariates " + names.front() + "... need panel data (data.distance) or a dyad_covariates table");
    p->panel_source = std::make_unique<PanelCovariates>(p->panels, names, cfg.model);
    p->source = p->panel_source.get();
  }
  return p;
}

FitOptions fit_options(const RunConfig& cfg, int jobs) {
  FitOptions o;
  o.ties = cfg.model.ties;
  o.max_iterations = cfg.max_iterations;
  o.jobs = jobs;
  o.sigma_lower = cfg.sigma_lower;
  o.sigma_upper = cfg.sigma_upper;
  return o;
}

void print_fit(std::ostream& log, const FitResult& fit) {
  const auto flags = log.flags();
  log << std::left << std::setw(28) << "coefficient" << std::right << std::setw(12) << "estimate" << std::setw(11)
      << "se" << std::setw(11) << "p" << "\n";
  for (const auto& c : fit.coefficients)
    log << std::left << std::setw(28) << c.name << std::right << std::setw(12) << std::setprecision(5) << c.estimate
        << std::setw(11) << std::setprecision(3) << c.se << std::setw(11) << c.p << "\n";
  for (const auto& v : fit.variance_components) {
    log << "sigma[" << v.family << "] = " << std::setprecision(4) << v.sigma << (v.at_lower_bound ? " (at bound)" : "")
        << ", p = " << std::setprecision(3) << v.p_value << "\n";
    const auto top = ranked_frailties(fit, v.family);
    log << "  top " << v.family << ":";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, top.size()); ++i)
      log << " " << top[i].label << " (" << std::setprecision(3) << top[i].estimate << ")";
    log << "\n";
  }
  log << "loglik " << std::setprecision(10) << fit.loglik_model << " (null " << fit.loglik_null << "), R^2 "
      << std::setprecision(3) << r_squared(fit) << "%, " << fit.n_events << " events\n";
  log.flags(flags);
}

int jobs_of(const RunConfig& cfg, const CommandOptions& o) { return o.jobs.value_or(cfg.jobs); }

}  // namespace

void cmd_prepare(const RunConfig& cfg, const CommandOptions&, std::ostream& log) {
  for (const auto* p : {&cfg.first_records, &cfg.natives, &cfg.regions, &cfg.distance, &cfg.aliases, &cfg.trade,
                        &cfg.temperature, &cfg.landcover, &cfg.empires, &cfg.dyad_covariates})
    need_file(*p);
  const auto res = resolver_from(cfg);
  auto records = load_first_records(need(cfg.first_records, "data.first_records"), res, cfg.taxon);
  if (records.empty()) throw InputError("taxon '" + cfg.taxon + "' matches no first records");
  auto natives = load_natives(need(cfg.natives, "data.natives"), res, records);
  const auto data = build_event_sequence(records, cfg.window, natives, res.regions());
  if (data.sequence.size() == 0) throw InputError("no invasion events inside the window");

  const auto cache = cfg.output / "cache";
  fs::create_directories(cache);
  CoverageReport report;
  if (cfg.distance) {
    const auto [y0, y1] = panel_years(cfg.window);
    const auto panels = load_panels({*cfg.distance, cfg.trade, cfg.temperature, cfg.landcover, cfg.empires}, res, y0, y1,
                                    records, natives, &report);
    write_panels(cache, panels);
  } else {
    for (const auto* p : {&cfg.trade, &cfg.temperature, &cfg.landcover, &cfg.empires})
      if (*p) throw InputError("panel " + (*p)->string() + " given without data.distance");
  }
  if (cfg.dyad_covariates) write_dyad_table(cache / "dyad_covariates.csv", read_dyad_table(*cfg.dyad_covariates, res));
  write_region_list(cache / "regions.csv", res.regions());
  write_first_records(cache / "first_records.csv", records, cfg.taxon);
  write_natives(cache / "natives.csv", natives);
  write_coverage_report(cfg.output / "coverage_report.csv", report);
  for (const auto& w : report.warnings) log << "warning: " << w << "\n";

  const auto& r = data.report;
  write_manifest(cache / "manifest.ini", cfg, "prepare",
                 {{"events", std::to_string(data.sequence.size())},
                  {"species", std::to_string(data.sequence.species().size())},
                  {"regions", std::to_string(res.regions().size())},
                  {"duplicates_collapsed", std::to_string(r.duplicates_collapsed)},
                  {"dropped_before_window", std::to_string(r.dropped_before_window)},
                  {"dropped_after_window", std::to_string(r.dropped_after_window)}});
  log << "prepared " << data.sequence.size() << " events (" << data.sequence.species().size() << " species, "
      << res.regions().size() << " regions) in " << cache.string() << "\n";
  for (const auto& pc : report.panels)
    log << "  " << pc.panel << ": " << pc.cells << " cells, " << std::setprecision(3) << pc.percent_imputed()
        << "% imputed\n";
}

void cmd_fit(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const auto prep = load_prepared(cfg);
  const auto fo = fit_options(cfg, jobs_of(cfg, opts));

  auto run_one = [&](const ModelSpec& spec, const fs::path& dir) {
    RemDesign design(prep->data.sequence, prep->data.occupancy, *prep->source, spec);
    log << "fitting " << design.column_count() << " coefficients";
    for (const auto& f : design.families()) log << " + " << f.name << " effects (" << f.size() << ")";
    log << " on " << design.event_count() << " events\n";
    FitResult fit = spec.random_effects.any() ? fit_mixed(design, fo) : fit_fixed(design, fo);
    write_fit(dir, fit, cfg.per_unit);
    auto used = cfg;
    used.model = spec;
    used.both_dyadic = false;
    write_manifest(dir / "manifest.ini", used, "fit",
                   {{"iterations", std::to_string(fit.convergence.iterations)},
                    {"gradient_norm", format_double(fit.convergence.gradient_norm)}});
    print_fit(log, fit);
    return fit;
  };

  if (!cfg.both_dyadic) {
    run_one(cfg.model, cfg.output / "fit");
    return;
  }
  std::vector<std::vector<std::string>> rows;
  for (auto kind : {DyadicEffect::ordered, DyadicEffect::symmetric}) {
    auto spec = cfg.model;
    spec.random_effects.dyadic = kind;
    log << "-- dyadic effect: " << to_string(kind) << "\n";
    const auto fit = run_one(spec, cfg.output / "fit" / to_string(kind));
    const auto ic = information_criteria(fit);
    rows.push_back({to_string(kind), format_double(fit.loglik_model), std::to_string(fit.df), format_double(ic.aic),
                    format_double(ic.bic), format_double(r_squared(fit))});
  }
  // The two forms are not nested; compare on likelihood and information criteria.
  const double diff = 2.0 * (std::stod(rows[0][1]) - std::stod(rows[1][1]));
  rows[0].push_back(format_double(diff));
  rows[1].push_back(format_double(-diff));
  write_csv(cfg.output / "fit" / "comparison.csv",
            {"dyadic", "loglik", "df", "aic", "bic", "r_squared_percent", "two_loglik_difference"}, rows);
  log << "ordered vs symmetric: 2*(l_ordered - l_symmetric) = " << diff << "\n";
}

void cmd_diagnose(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const auto prep = load_prepared(cfg);
  auto spec = cfg.model;
  fs::path fit_dir = opts.fit_dir.value_or(cfg.output / "fit");
  fs::path out_dir = cfg.output / "diagnostics";
  if (cfg.both_dyadic) {
    if (!opts.fit_dir) fit_dir /= "ordered";
    spec.random_effects.dyadic = fit_dir.filename() == "symmetric" ? DyadicEffect::symmetric : DyadicEffect::ordered;
    out_dir /= to_string(spec.random_effects.dyadic);
  }
  const auto fit = read_fit(fit_dir);
  RemDesign design(prep->data.sequence, prep->data.occupancy, *prep->source, spec);
  bool same = design.column_count() == fit.coefficients.size();
  for (std::size_t j = 0; same && j < design.column_count(); ++j) same = design.columns()[j].name == fit.coefficients[j].name;
  const auto layout = layout_of(design, fit);
  if (!same || layout.total() != static_cast<std::size_t>(fit.theta.size()))
    throw InputError("the fit in " + fit_dir.string() + " was made with a different model than this config");

  const int jobs = jobs_of(cfg, opts);
  const auto res = schoenfeld(fit, design, jobs);
  const auto ph = ph_test(res, fit.covariance, fit.beta, parse_time_transform(opts.transform), design.window().begin);
  const auto cor = covariate_correlations(design);
  fs::create_directories(out_dir);
  write_residuals(out_dir / "schoenfeld.csv", res, prep->data.sequence.species(), prep->data.sequence.regions());
  write_ph_test(out_dir, ph);
  write_correlations(out_dir / "correlations.csv", cor);
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& h : hazard_ratio_report(fit, cfg.per_unit))
      rows.push_back({h.name, format_double(h.delta), format_double(h.multiplier), format_double(h.lower),
                      format_double(h.upper), format_double(h.percent_change)});
    write_csv(out_dir / "hazard_ratios.csv", {"name", "per_unit", "multiplier", "lower", "upper", "percent_change"}, rows);
  }
  write_manifest(out_dir / "manifest.ini", cfg, "diagnose", {{"fit", fs::absolute(fit_dir).string()}, {"transform", opts.transform}});

  log << res.schoenfeld.rows() << " Schoenfeld residual rows; column sums:";
  for (Eigen::Index j = 0; j < res.schoenfeld.cols(); ++j) log << " " << res.schoenfeld.col(j).sum();
  log << "\nproportional hazards (" << opts.transform << " time): global chi2 = " << ph.global_chisq << ", df "
      << ph.global_df << ", p = " << ph.global_p << "\n";
  for (const auto& r : ph.rows)
    if (r.testable && r.p < 0.05) log << "  " << r.column << ": p = " << r.p << "\n";
  log << "largest |correlation| between covariates: " << cor.max_abs << "\n";
}

void cmd_simulate(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const auto& sc = cfg.sim;
  if (cfg.both_dyadic) throw InputError("simulate needs a single dyadic form, not 'both'");
  std::size_t n_cov = 0;
  for (const auto& c : cfg.model.covariates) {
    std::size_t j = 0;
    if (c.name.size() < 2 || c.name[0] != 'x' || (j = std::strtoul(c.name.c_str() + 1, nullptr, 10)) == 0 ||
        c.name != "x" + std::to_string(j))
      throw InputError("simulate uses synthetic covariates named x1, x2, ...; got '" + c.name + "'");
    n_cov = std::max(n_cov, j);
  }
  if (n_cov == 0) throw InputError("config needs 'model.covariates'");
  auto world = make_synthetic_world(sc.species, sc.regions, n_cov, sc.natives, sc.world_seed);

  GenerativeSpec g;
  g.model = cfg.model;
  g.beta = Eigen::Map<const Eigen::VectorXd>(sc.beta.data(), static_cast<Eigen::Index>(sc.beta.size()));
  g.baseline = {sc.baseline_breaks, sc.baseline_rates};
  g.window = sc.window;
  g.max_events = sc.max_events;
  g.annual_times = sc.annual;
  const auto& re = cfg.model.random_effects;
  if (re.species) g.frailty_sd.push_back(sc.species_sd);
  if (re.region) g.frailty_sd.push_back(sc.region_sd);
  if (re.dyadic != DyadicEffect::none) {
    g.frailty_sd.push_back(sc.dyadic_sd);
    for (std::size_t s = 0; s < std::min(cfg.model.top_k, sc.species); ++s)
      g.top_species.push_back(SpeciesId{static_cast<std::int32_t>(s)});
  }
  const auto seed = opts.seed.value_or(cfg.seed);
  const auto sim = simulate(g, world.occupancy, *world.covariates, world.species, world.regions, seed);

  const auto dir = cfg.output / "simulate";
  fs::create_directories(dir);
  write_first_records(dir / "first_records.csv", to_first_records(sim, world.species, world.regions), "simulated");
  write_natives(dir / "natives.csv", world.natives);
  write_region_list(dir / "regions.csv", world.regions);
  {
    DyadTable t;
    for (std::size_t j = 0; j < n_cov; ++j) t.names.push_back("x" + std::to_string(j + 1));
    for (std::size_t s = 0; s < sc.species; ++s)
      for (std::size_t c = 0; c < sc.regions; ++c) {
        std::vector<double> v;
        for (std::size_t j = 0; j < n_cov; ++j)
          v.push_back(world.covariates->at(SpeciesId{static_cast<int>(s)}, RegionId{static_cast<int>(c)}, j));
        t.rows.emplace_back(world.species.name(static_cast<int>(s)), world.regions.name(static_cast<int>(c)), std::move(v));
      }
    write_dyad_table(dir / "dyad_covariates.csv", t);
  }
  {
    DesignAssembler assembler(*world.covariates, g.model, world.species, world.regions, g.top_species);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t j = 0; j < assembler.columns().size(); ++j)
      rows.push_back({"beta", assembler.columns()[j].name, format_double(g.beta[static_cast<Eigen::Index>(j)])});
    for (std::size_t f = 0; f < sim.frailties.size(); ++f)
      for (Eigen::Index k = 0; k < sim.frailties[f].size(); ++k)
        rows.push_back({assembler.families()[f].name, assembler.families()[f].labels[static_cast<std::size_t>(k)],
                        format_double(sim.frailties[f][k])});
    write_csv(dir / "truth.csv", {"kind", "name", "value"}, rows);
  }
  // A config that fits the simulated data with the generating model.
  auto fit_cfg = cfg;
  fit_cfg.first_records = dir / "first_records.csv";
  fit_cfg.natives = dir / "natives.csv";
  fit_cfg.regions = dir / "regions.csv";
  fit_cfg.dyad_covariates = dir / "dyad_covariates.csv";
  fit_cfg.distance = fit_cfg.aliases = fit_cfg.trade = fit_cfg.temperature = fit_cfg.landcover = fit_cfg.empires =
      std::nullopt;
  fit_cfg.taxon = "all";
  fit_cfg.window = sc.window;
  fit_cfg.output = dir / "analysis";
  {
    std::ofstream out(dir / "fit.ini");
    out << "; fits the simulated data with the generating model\n" << canonical_config(fit_cfg);
  }
  write_manifest(dir / "manifest.ini", cfg, "simulate",
                 {{"seed", std::to_string(seed)}, {"events", std::to_string(sim.events.size())},
                  {"ended_early", sim.ended_early ? "true" : "false"}});
  log << "simulated " << sim.events.size() << " events" << (sim.ended_early ? " (every rate reached 0)" : "")
      << " up to t = " << sim.end_time << " into " << dir.string() << "\n";
}

}  // namespace remcli
