#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rem/covariates.hpp"
#include "rem/event_core.hpp"
#include "rem/panels.hpp"
#include "rem/simulator.hpp"

namespace remtest {

// Three regions on a line-ish layout (A-B 1, B-C 2, A-C 3), tuna native to A
// and dove native to C; tuna reaches B, then dove reaches A.
struct TwoInvasions {
  rem::CovariatePanels panels;
  rem::EventData data;
  rem::ModelSpec spec;
  std::unique_ptr<rem::PanelCovariates> source;
  std::unique_ptr<rem::RemDesign> design;
};

inline std::unique_ptr<TwoInvasions> make_two_invasions(rem::Ties ties = rem::Ties::efron) {
  auto f = std::make_unique<TwoInvasions>();
  f->panels.regions = rem::NodeIndex({"A", "B", "C"});
  f->panels.first_year = 1880;
  f->panels.last_year = 2005;
  f->panels.distance_km.resize(3, 3);
  f->panels.distance_km << 0, 1, 3, 1, 0, 2, 3, 2, 0;
  std::vector<rem::FirstRecord> records{{"tuna", "B", 1900.0}, {"dove", "A", 1950.0}};
  std::vector<rem::NativeRange> natives{{"tuna", "A"}, {"dove", "C"}};
  f->data = rem::build_event_sequence(records, {1880.0, 2005.0}, natives, f->panels.regions);
  f->spec.covariates = {{"distance", false}};
  f->spec.distance_unit_km = 1.0;
  f->spec.ties = ties;
  f->source = std::make_unique<rem::PanelCovariates>(f->panels, std::vector<std::string>{"distance"}, f->spec);
  f->design = std::make_unique<rem::RemDesign>(f->data.sequence, f->data.occupancy, *f->source, f->spec);
  return f;
}

struct RandomDesignOptions {
  int blocks = 10;
  int max_rows = 8;
  int columns = 3;
  int max_ties = 1;
  std::vector<int> family_sizes;  // random-effect families
};

// Blocks of random rows; events are distinct rows chosen uniformly.
inline rem::MaterializedDesign random_design(std::mt19937_64& rng, const RandomDesignOptions& o) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<rem::EventBlock> blocks;
  for (int k = 0; k < o.blocks; ++k) {
    rem::EventBlock b;
    b.time = 1900.0 + k;
    const int n = 2 + static_cast<int>(rng() % static_cast<unsigned>(o.max_rows - 1));
    b.x.resize(n, o.columns);
    for (int r = 0; r < n; ++r) {
      b.dyads.push_back({rem::SpeciesId{r}, rem::RegionId{k}});
      for (int j = 0; j < o.columns; ++j) b.x(r, j) = N(rng);
    }
    for (int size : o.family_sizes) {
      std::vector<std::int32_t> g(static_cast<std::size_t>(n));
      for (auto& v : g) v = static_cast<std::int32_t>(rng() % static_cast<unsigned>(size));
      b.groups.push_back(std::move(g));
    }
    const int d = 1 + static_cast<int>(rng() % static_cast<unsigned>(std::min(o.max_ties, n - 1)));
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) rows[static_cast<std::size_t>(r)] = r;
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<std::size_t>(d));
    std::sort(rows.begin(), rows.end());
    for (int r : rows) b.event_rows.push_back(r);
    blocks.push_back(std::move(b));
  }
  std::vector<rem::ColumnInfo> cols;
  for (int j = 0; j < o.columns; ++j) cols.push_back({"x" + std::to_string(j + 1), "x" + std::to_string(j + 1), "", -1, 0, 0});
  std::vector<rem::RandomFamily> fams;
  const char* names[] = {"species", "region", "dyadic_ordered"};
  for (std::size_t f = 0; f < o.family_sizes.size(); ++f) {
    rem::RandomFamily fam{names[f % 3], {}};
    for (int g = 0; g < o.family_sizes[f]; ++g) fam.labels.push_back("g" + std::to_string(g));
    fams.push_back(std::move(fam));
  }
  return rem::MaterializedDesign(std::move(blocks), std::move(cols), std::move(fams), {1900.0, 1900.0 + o.blocks});
}

// A simulated sequence with the occupancy it implies, ready to fit.
struct SimData {
  rem::SimulationResult sim;
  rem::EventSequence seq;
  rem::OccupancyState occ;
  std::unique_ptr<rem::RemDesign> design;
};

inline std::unique_ptr<SimData> simulate_data(const rem::SyntheticWorld& w, const rem::GenerativeSpec& g,
                                              std::uint64_t seed, const rem::CovariateSource* source = nullptr) {
  if (!source) source = w.covariates.get();
  auto d = std::make_unique<SimData>();
  d->sim = rem::simulate(g, w.occupancy, *source, w.species, w.regions, seed);
  d->seq = rem::to_sequence(d->sim, g.window, w.species, w.regions);
  d->occ = w.occupancy;
  for (const auto& e : d->sim.events) d->occ.set_invaded(e.sender, e.receiver, e.time);
  d->design = std::make_unique<rem::RemDesign>(d->seq, d->occ, *source, g.model);
  return d;
}

// One-sample Kolmogorov-Smirnov test; returns the asymptotic p-value.
inline double ks_pvalue(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double D = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    D = std::max({D, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  const double lam = (sn + 0.12 + 0.11 / sn) * D;
  if (lam < 0.2) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace remtest
