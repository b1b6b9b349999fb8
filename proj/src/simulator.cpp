#include "rem/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rem/errors.hpp"

namespace rem {

PiecewiseBaseline PiecewiseBaseline::constant(double rate, double from) { return {{from}, {rate}}; }

void PiecewiseBaseline::validate() const {
  if (breaks.empty() || breaks.size() != rates.size()) throw InputError("baseline needs one rate per break");
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (!(rates[j] >= 0.0) || !std::isfinite(rates[j])) throw InputError("baseline rates must be finite and >= 0");
    if (j > 0 && !(breaks[j] > breaks[j - 1])) throw InputError("baseline breaks must increase");
  }
}

double PiecewiseBaseline::rate_at(double t) const {
  auto it = std::upper_bound(breaks.begin(), breaks.end(), t);
  if (it == breaks.begin()) return rates.front();
  return rates[static_cast<std::size_t>(it - breaks.begin()) - 1];
}

double PiecewiseBaseline::next_break_after(double t) const {
  auto it = std::upper_bound(breaks.begin(), breaks.end(), t);
  return it == breaks.end() ? std::numeric_limits<double>::infinity() : *it;
}

SimulationResult simulate(const GenerativeSpec& spec, const OccupancyState& initial, const CovariateSource& source,
                          const NodeIndex& species, const NodeIndex& regions, std::uint64_t seed) {
  spec.baseline.validate();
  if (!(spec.window.end > spec.window.begin)) throw InputError("simulation window is empty");
  spec.model.validate(spec.window);
  DesignAssembler assembler(source, spec.model, species, regions, spec.top_species);
  if (static_cast<std::size_t>(spec.beta.size()) != assembler.columns().size())
    throw InputError("beta has " + std::to_string(spec.beta.size()) + " entries but the model has " +
                     std::to_string(assembler.columns().size()) + " columns");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimulationResult out;
  const auto& families = assembler.families();
  for (std::size_t f = 0; f < families.size(); ++f) {
    const double sd = f < spec.frailty_sd.size() ? spec.frailty_sd[f] : 0.0;
    Eigen::VectorXd b(static_cast<Eigen::Index>(families[f].size()));
    for (Eigen::Index g = 0; g < b.size(); ++g) b[g] = sd * normal(rng);
    out.frailties.push_back(std::move(b));
  }

  OccupancyState occ = initial;
  std::vector<Event> history;
  const SnapshotOptions snap_opts = assembler.snapshot_options(true);
  const auto n_species = static_cast<std::int32_t>(species.size());
  const auto n_regions = static_cast<std::int32_t>(regions.size());

  double t = spec.window.begin;
  EventBlock block;
  std::vector<double> cum;
  while (t < spec.window.end && (spec.max_events == 0 || history.size() < spec.max_events)) {
    const double seg_end =
        std::min({std::floor(t) + 1.0, spec.baseline.next_break_after(t), spec.window.end});
    const double lambda0 = spec.baseline.rate_at(t);
    if (lambda0 == 0.0) {
      t = seg_end;
      continue;
    }

    std::vector<Dyad> risk;
    for (std::int32_t s = 0; s < n_species; ++s)
      for (std::int32_t c = 0; c < n_regions; ++c)
        if (!occ.occupied_at(SpeciesId{s}, RegionId{c}, t)) risk.push_back({SpeciesId{s}, RegionId{c}});
    if (risk.empty()) {
      out.ended_early = true;
      break;
    }

    ProcessSnapshot snap(t, occ, History(history, t), snap_opts);
    assembler.assemble(snap, risk, block);
    Eigen::VectorXd eta = block.x * spec.beta;
    for (std::size_t f = 0; f < families.size(); ++f)
      for (std::size_t r = 0; r < risk.size(); ++r)
        if (block.groups[f][r] >= 0) eta[static_cast<Eigen::Index>(r)] += out.frailties[f][block.groups[f][r]];

    // Rates relative to the largest, so the sum cannot overflow.
    const double m = eta.maxCoeff();
    if (m == -std::numeric_limits<double>::infinity()) {
      out.ended_early = true;
      break;
    }
    cum.resize(risk.size());
    double total = 0.0;
    for (std::size_t r = 0; r < risk.size(); ++r) {
      total += std::exp(eta[static_cast<Eigen::Index>(r)] - m);
      cum[r] = total;
    }
    const double rate = lambda0 * std::exp(m) * total;
    const double dt = expo(rng) / rate;
    if (!(t + dt < seg_end)) {
      t = seg_end;
      continue;
    }
    t += dt;
    const double u = unif(rng) * total;
    auto pick = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (pick == risk.size()) {  // u rounded up to total: take the last row with a positive rate
      pick = risk.size() - 1;
      while (pick > 0 && cum[pick] == cum[pick - 1]) --pick;
    }
    occ.set_invaded(risk[pick].species, risk[pick].region, t);
    history.push_back({risk[pick].species, risk[pick].region, t});
  }
  out.end_time = std::min(t, spec.window.end);
  out.events = std::move(history);
  if (spec.annual_times)
    for (auto& e : out.events) e.time = std::floor(e.time);
  return out;
}

double oracle_event_prob(std::span<const double> beta, std::span<const std::vector<double>> rows,
                         std::size_t event_index) {
  if (rows.empty() || event_index >= rows.size()) throw std::invalid_argument("event index outside the risk set");
  std::vector<long double> scores;
  scores.reserve(rows.size());
  for (const auto& row : rows) {
    long double s = 0.0L;
    for (std::size_t j = 0; j < beta.size(); ++j) s += static_cast<long double>(beta[j]) * row.at(j);
    scores.push_back(s);
  }
  const long double top = *std::max_element(scores.begin(), scores.end());
  long double denom = 0.0L;
  for (auto s : scores) denom += std::exp(s - top);
  return static_cast<double>(std::exp(scores[event_index] - top) / denom);
}

SyntheticWorld make_synthetic_world(std::size_t n_species, std::size_t n_regions, std::size_t n_covariates,
                                    std::size_t natives_per_species, std::uint64_t seed) {
  if (natives_per_species == 0 || natives_per_species >= n_regions)
    throw InputError("each species needs at least one native region and one region to invade");
  SyntheticWorld w;
  for (std::size_t s = 0; s < n_species; ++s) w.species.intern("sp" + std::to_string(s + 1));
  for (std::size_t c = 0; c < n_regions; ++c) w.regions.intern("r" + std::to_string(c + 1));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n_covariates; ++j) names.push_back("x" + std::to_string(j + 1));
  w.covariates = std::make_unique<StaticDyadCovariates>(n_species, n_regions, names);
  w.occupancy = OccupancyState(n_species, n_regions);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::int32_t> pool(n_regions);
  for (std::size_t s = 0; s < n_species; ++s) {
    const SpeciesId sid{static_cast<std::int32_t>(s)};
    for (std::size_t c = 0; c < n_regions; ++c)
      for (std::size_t j = 0; j < n_covariates; ++j)
        w.covariates->at(sid, RegionId{static_cast<std::int32_t>(c)}, j) = normal(rng);
    for (std::size_t c = 0; c < n_regions; ++c) pool[c] = static_cast<std::int32_t>(c);
    // Partial Fisher-Yates with the engine directly, so draws are portable.
    for (std::size_t k = 0; k < natives_per_species; ++k) {
      const auto pick = k + static_cast<std::size_t>(rng() % (n_regions - k));
      std::swap(pool[k], pool[pick]);
      const RegionId c{pool[k]};
      w.occupancy.set_native(sid, c);
      w.natives.push_back({w.species.name(sid.value), w.regions.name(c.value)});
    }
  }
  return w;
}

EventSequence to_sequence(const SimulationResult& sim, const Window& window, const NodeIndex& species,
                          const NodeIndex& regions) {
  return EventSequence(sim.events, window, species, regions);
}

std::vector<FirstRecord> to_first_records(const SimulationResult& sim, const NodeIndex& species,
                                          const NodeIndex& regions) {
  std::vector<FirstRecord> out;
  out.reserve(sim.events.size());
  for (const auto& e : sim.events) out.push_back({species.name(e.sender.value), regions.name(e.receiver.value), e.time});
  return out;
}

}  // namespace rem
