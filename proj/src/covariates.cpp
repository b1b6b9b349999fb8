#include "rem/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rem/errors.hpp"

namespace rem {

// ---- snapshot --------------------------------------------------------------

ProcessSnapshot::ProcessSnapshot(double time, const OccupancyState& occ, History history,
                                 const SnapshotOptions& opts)
    : time_(time), occ_(&occ), history_(history), inclusive_(opts.inclusive), top_rank_(opts.top_rank) {
  const std::size_t n_species = occ.species_count();
  const std::size_t n_regions = occ.region_count();
  if (top_rank_.empty()) top_rank_.assign(n_species, -1);

  occupied_offsets_.reserve(n_species + 1);
  invaded_offsets_.reserve(n_species + 1);
  occupied_offsets_.push_back(0);
  invaded_offsets_.push_back(0);
  for (std::size_t s = 0; s < n_species; ++s) {
    auto row = occ.entries_of(SpeciesId{static_cast<std::int32_t>(s)});
    for (std::size_t c = 0; c < n_regions; ++c) {
      const double e = row[c];
      const bool in = inclusive_ ? e <= time_ : e < time_;
      if (!in) continue;
      occupied_flat_.push_back(RegionId{static_cast<std::int32_t>(c)});
      if (e != OccupancyState::kNative) invaded_flat_.push_back(RegionId{static_cast<std::int32_t>(c)});
    }
    occupied_offsets_.push_back(occupied_flat_.size());
    invaded_offsets_.push_back(invaded_flat_.size());
  }

  last_invader_.assign(n_regions, -1);
  prior_.assign(n_regions, 0.0);
  for (const auto& e : history_.events()) {
    const bool in = inclusive_ ? e.time <= time_ : e.time < time_;
    if (!in) continue;
    const auto c = static_cast<std::size_t>(e.receiver.value);
    prior_[c] += std::pow(opts.decay, time_ - e.time);
    if (top_rank_[static_cast<std::size_t>(e.sender.value)] >= 0) {
      last_invader_[c] = e.sender.value;
    } else if (opts.last_invader == LastInvaderRule::reset) {
      last_invader_[c] = -1;
    }
  }
}

int ProcessSnapshot::year() const { return static_cast<int>(std::floor(time_)); }

bool ProcessSnapshot::occupied(SpeciesId s, RegionId c) const {
  return inclusive_ ? occ_->occupied_at(s, c, time_) : occ_->occupied_before(s, c, time_);
}

std::span<const RegionId> ProcessSnapshot::occupied_regions(SpeciesId s) const {
  const auto i = static_cast<std::size_t>(s.value);
  return {occupied_flat_.data() + occupied_offsets_[i], occupied_offsets_[i + 1] - occupied_offsets_[i]};
}

std::span<const RegionId> ProcessSnapshot::invaded_regions(SpeciesId s) const {
  const auto i = static_cast<std::size_t>(s.value);
  return {invaded_flat_.data() + invaded_offsets_[i], invaded_offsets_[i + 1] - invaded_offsets_[i]};
}

std::optional<SpeciesId> ProcessSnapshot::last_invader(RegionId c) const {
  const auto v = last_invader_[static_cast<std::size_t>(c.value)];
  if (v < 0) return std::nullopt;
  return SpeciesId{v};
}

std::int32_t ProcessSnapshot::top_rank(SpeciesId s) const { return top_rank_[static_cast<std::size_t>(s.value)]; }

// ---- statistics ------------------------------------------------------------

double min_distance(std::span<const RegionId> sources, RegionId c, const CovariatePanels& panels) {
  if (sources.empty()) throw InputError("distance undefined: species occupies no region");
  double best = std::numeric_limits<double>::infinity();
  for (auto r : sources) best = std::min(best, panels.distance_km(r.value, c.value));
  return best;
}

double min_distance(SpeciesId s, RegionId c, double t, const OccupancyState& occ, const CovariatePanels& panels) {
  return min_distance(occ.occupied_regions_before(s, t), c, panels);
}

double trade_sum_log(std::span<const RegionId> sources, RegionId c, int year, const CovariatePanels& panels) {
  const auto& m = panels.imports[static_cast<std::size_t>(panels.year_index(year, "trade"))];
  double total = 0.0;
  for (auto r : sources) {
    if (r == c) continue;
    total += m(r.value, c.value) + m(c.value, r.value);
  }
  return std::log1p(total);
}

double trade_sum_log(SpeciesId s, RegionId c, double t, const OccupancyState& occ, const CovariatePanels& panels) {
  return trade_sum_log(occ.occupied_regions_before(s, t), c, static_cast<int>(std::floor(t)), panels);
}

double temp_diff_min(std::span<const RegionId> sources, RegionId c, int year, const CovariatePanels& panels) {
  if (sources.empty()) throw InputError("temperature difference undefined: species occupies no region");
  const int y = panels.year_index(year, "temperature");
  const double tc = panels.temperature(c.value, y);
  double best = std::numeric_limits<double>::infinity();
  for (auto r : sources) {
    if (r == c) continue;
    best = std::min(best, std::abs(panels.temperature(r.value, y) - tc));
  }
  if (!std::isfinite(best)) throw InputError("temperature difference undefined: no source region other than target");
  return best;
}

double temp_diff_min(SpeciesId s, RegionId c, double t, const OccupancyState& occ, const CovariatePanels& panels) {
  return temp_diff_min(occ.occupied_regions_before(s, t), c, static_cast<int>(std::floor(t)), panels);
}

LandCover land_cover(RegionId c, int year, const CovariatePanels& panels) {
  const int y = panels.year_index(year, "landcover");
  const double crop = panels.cropland(c.value, y);
  const double past = panels.pasture(c.value, y);
  const double urb = panels.urban(c.value, y);
  if (crop + past + urb > 1.0 + 1e-9) {
    std::ostringstream msg;
    msg << "land-cover proportions exceed 1 for region '" << panels.regions.name(c.value) << "' in " << year;
    throw InputError(msg.str());
  }
  return LandCover{crop + past, urb};
}

double colonial_indicator(std::span<const RegionId> sources, RegionId c, const CovariatePanels& panels) {
  const int e = panels.empire[static_cast<std::size_t>(c.value)];
  if (e < 0) return 0.0;
  for (auto r : sources) {
    if (r != c && panels.empire[static_cast<std::size_t>(r.value)] == e) return 1.0;
  }
  return 0.0;
}

double colonial_indicator(SpeciesId s, RegionId c, double t, const OccupancyState& occ,
                          const CovariatePanels& panels) {
  return colonial_indicator(occ.occupied_regions_before(s, t), c, panels);
}

double prior_invasions_weighted(RegionId c, double t, const History& history, double decay) {
  if (!(decay > 0.0 && decay <= 1.0)) throw InputError("decay must lie in (0, 1]");
  double total = 0.0;
  for (const auto& e : history.events()) {
    if (e.receiver == c && e.time < t) total += std::pow(decay, t - e.time);
  }
  return total;
}

std::optional<SpeciesId> last_invader(RegionId c, double t, const History& history,
                                      std::span<const std::int32_t> top_rank, LastInvaderRule rule) {
  std::optional<SpeciesId> out;
  for (const auto& e : history.events()) {
    if (e.receiver != c || !(e.time < t)) continue;
    const auto s = static_cast<std::size_t>(e.sender.value);
    const bool top = s < top_rank.size() && top_rank[s] >= 0;
    if (top) {
      out = e.sender;
    } else if (rule == LastInvaderRule::reset) {
      out.reset();
    }
  }
  return out;
}

// ---- panel covariates ------------------------------------------------------

PanelCovariates::Kind PanelCovariates::parse(const std::string& name) {
  if (name == "distance") return Kind::distance;
  if (name == "trade") return Kind::trade;
  if (name == "temp_diff") return Kind::temp_diff;
  if (name == "agri") return Kind::agri;
  if (name == "urban") return Kind::urban;
  if (name == "colonial") return Kind::colonial;
  if (name == "prior_invasions") return Kind::prior_invasions;
  if (name == "sampling_effort") return Kind::sampling_effort;
  throw InputError("unknown covariate '" + name + "'");
}

bool PanelCovariates::known(const std::string& name) {
  try {
    parse(name);
    return true;
  } catch (const InputError&) {
    return false;
  }
}

PanelCovariates::PanelCovariates(const CovariatePanels& panels, std::vector<std::string> names,
                                 const ModelSpec& spec)
    : panels_(&panels),
      source_regions_(spec.source_regions),
      distance_unit_km_(spec.distance_unit_km),
      log_sampling_effort_(spec.log_sampling_effort) {
  for (const auto& n : names) {
    const Kind k = parse(n);
    const char* missing = nullptr;
    switch (k) {
      case Kind::distance: if (!panels.has_distance()) missing = "distance"; break;
      case Kind::trade: if (!panels.has_trade()) missing = "trade"; break;
      case Kind::temp_diff: if (!panels.has_temperature()) missing = "temperature"; break;
      case Kind::agri:
      case Kind::urban: if (!panels.has_landcover()) missing = "landcover"; break;
      case Kind::colonial: if (!panels.has_empires()) missing = "empires"; break;
      case Kind::sampling_effort: if (!panels.has_sampling_effort()) missing = "sampling effort"; break;
      case Kind::prior_invasions: break;
    }
    if (missing) throw InputError("covariate '" + n + "' needs the " + missing + " panel");
    kinds_.push_back(k);
  }
}

std::string PanelCovariates::name(std::size_t j) const {
  switch (kinds_.at(j)) {
    case Kind::distance: return "distance";
    case Kind::trade: return "trade";
    case Kind::temp_diff: return "temp_diff";
    case Kind::agri: return "agri";
    case Kind::urban: return "urban";
    case Kind::colonial: return "colonial";
    case Kind::prior_invasions: return "prior_invasions";
    case Kind::sampling_effort: return "sampling_effort";
  }
  return {};
}

std::string PanelCovariates::unit(std::size_t j) const {
  switch (kinds_.at(j)) {
    case Kind::distance: {
      std::ostringstream u;
      u << distance_unit_km_ << " km";
      return u.str();
    }
    case Kind::trade: return "log(1+USD)";
    case Kind::temp_diff: return "degC";
    case Kind::agri:
    case Kind::urban: return "proportion";
    case Kind::colonial: return "indicator";
    case Kind::prior_invasions: return "decayed count";
    case Kind::sampling_effort: return log_sampling_effort_ ? "log(1+species)" : "species";
  }
  return {};
}

void PanelCovariates::evaluate(const ProcessSnapshot& snap, std::span<const Dyad> dyads,
                               Eigen::Ref<Eigen::MatrixXd> out) const {
  const auto& p = *panels_;
  const int year = snap.year();
  for (std::size_t i = 0; i < dyads.size(); ++i) {
    const auto [s, c] = dyads[i];
    const auto occupied = snap.occupied_regions(s);
    auto sources = occupied;
    if (source_regions_ == SourceRegions::invaded_only) {
      const auto invaded = snap.invaded_regions(s);
      if (!invaded.empty()) sources = invaded;
    }
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < kinds_.size(); ++j) {
      double v = 0.0;
      switch (kinds_[j]) {
        case Kind::distance: v = min_distance(occupied, c, p) / distance_unit_km_; break;
        case Kind::trade: v = trade_sum_log(sources, c, year, p); break;
        case Kind::temp_diff: v = temp_diff_min(sources, c, year, p); break;
        case Kind::agri: v = land_cover(c, year, p).agri; break;
        case Kind::urban: v = land_cover(c, year, p).urban; break;
        case Kind::colonial: v = colonial_indicator(occupied, c, p); break;
        case Kind::prior_invasions: v = snap.prior_invasions(c); break;
        case Kind::sampling_effort: {
          const double n = p.sampling_effort[static_cast<std::size_t>(c.value)];
          v = log_sampling_effort_ ? std::log1p(n) : n;
          break;
        }
      }
      out(row, static_cast<Eigen::Index>(j)) = v;
    }
  }
}

// ---- static covariates -----------------------------------------------------

StaticDyadCovariates::StaticDyadCovariates(std::size_t n_species, std::size_t n_regions,
                                           std::vector<std::string> names)
    : n_regions_(n_regions), names_(std::move(names)), values_(n_species * n_regions * names_.size(), 0.0) {}

double& StaticDyadCovariates::at(SpeciesId s, RegionId c, std::size_t j) {
  return values_[(static_cast<std::size_t>(s.value) * n_regions_ + static_cast<std::size_t>(c.value)) *
                     names_.size() + j];
}

double StaticDyadCovariates::at(SpeciesId s, RegionId c, std::size_t j) const {
  return values_[(static_cast<std::size_t>(s.value) * n_regions_ + static_cast<std::size_t>(c.value)) *
                     names_.size() + j];
}

void StaticDyadCovariates::evaluate(const ProcessSnapshot&, std::span<const Dyad> dyads,
                                    Eigen::Ref<Eigen::MatrixXd> out) const {
  for (std::size_t i = 0; i < dyads.size(); ++i) {
    for (std::size_t j = 0; j < names_.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = at(dyads[i].species, dyads[i].region, j);
    }
  }
}

// ---- assembly --------------------------------------------------------------

std::int32_t dyadic_group_index(std::int32_t last_rank, std::int32_t candidate_rank, DyadicEffect kind,
                                std::size_t k) {
  if (kind == DyadicEffect::none || last_rank < 0 || candidate_rank < 0) return -1;
  const auto kk = static_cast<std::int32_t>(k);
  if (kind == DyadicEffect::ordered) return last_rank * kk + candidate_rank;
  const std::int32_t i = std::min(last_rank, candidate_rank);
  const std::int32_t j = std::max(last_rank, candidate_rank);
  return i * kk - i * (i - 1) / 2 + (j - i);
}

std::size_t dyadic_group_count(DyadicEffect kind, std::size_t k) {
  switch (kind) {
    case DyadicEffect::ordered: return k * k;
    case DyadicEffect::symmetric: return k * (k + 1) / 2;
    default: return 0;
  }
}

DesignAssembler::DesignAssembler(const CovariateSource& source, const ModelSpec& spec, const NodeIndex& species,
                                 const NodeIndex& regions, std::vector<SpeciesId> top_species)
    : source_(&source), spec_(spec) {
  for (const auto& decl : spec_.covariates) {
    std::size_t found = source.dimension();
    for (std::size_t j = 0; j < source.dimension(); ++j) {
      if (source.name(j) == decl.name) found = j;
    }
    if (found == source.dimension()) throw InputError("covariate source has no column '" + decl.name + "'");
    source_column_.push_back(found);
    const std::string unit = source.unit(found);
    if (!decl.piecewise) {
      columns_.push_back(ColumnInfo{decl.name, decl.name, unit, -1, 0.0, 0.0});
    } else {
      for (std::size_t p = 0; p < spec_.period_count(); ++p) {
        columns_.push_back(ColumnInfo{decl.name + "[" + spec_.period_label(p) + "]", decl.name, unit,
                                      static_cast<int>(p), spec_.period_breaks[p], spec_.period_breaks[p + 1]});
      }
    }
  }

  top_rank_.assign(species.size(), -1);
  top_k_ = top_species.size();
  for (std::size_t i = 0; i < top_species.size(); ++i) {
    top_rank_[static_cast<std::size_t>(top_species[i].value)] = static_cast<std::int32_t>(i);
  }

  const auto& re = spec_.random_effects;
  if (re.species) {
    species_family_ = static_cast<int>(families_.size());
    families_.push_back(RandomFamily{"species", species.names()});
  }
  if (re.region) {
    region_family_ = static_cast<int>(families_.size());
    families_.push_back(RandomFamily{"region", regions.names()});
  }
  if (re.dyadic != DyadicEffect::none) {
    dyadic_family_ = static_cast<int>(families_.size());
    const std::size_t k = top_species.size();
    std::vector<std::string> labels(dyadic_group_count(re.dyadic, k));
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        const auto g = dyadic_group_index(static_cast<std::int32_t>(a), static_cast<std::int32_t>(b), re.dyadic, k);
        const auto& na = species.name(top_species[a].value);
        const auto& nb = species.name(top_species[b].value);
        if (re.dyadic == DyadicEffect::ordered) {
          labels[static_cast<std::size_t>(g)] = na + ">" + nb;
        } else if (a <= b) {
          labels[static_cast<std::size_t>(g)] = na + "~" + nb;
        }
      }
    }
    families_.push_back(RandomFamily{
        re.dyadic == DyadicEffect::ordered ? "dyadic_ordered" : "dyadic_symmetric", std::move(labels)});
  }
}

SnapshotOptions DesignAssembler::snapshot_options(bool inclusive) const {
  SnapshotOptions o;
  o.decay = spec_.decay;
  o.last_invader = spec_.last_invader;
  o.top_rank = top_rank_;
  o.inclusive = inclusive;
  return o;
}

void DesignAssembler::assemble(const ProcessSnapshot& snap, std::span<const Dyad> dyads, EventBlock& out) const {
  const auto n = static_cast<Eigen::Index>(dyads.size());
  Eigen::MatrixXd raw(n, static_cast<Eigen::Index>(source_->dimension()));
  source_->evaluate(snap, dyads, raw);

  out.time = snap.time();
  out.dyads.assign(dyads.begin(), dyads.end());
  out.x.setZero(n, static_cast<Eigen::Index>(columns_.size()));
  const std::size_t period = spec_.period_of(snap.time());
  Eigen::Index col = 0;
  for (std::size_t d = 0; d < spec_.covariates.size(); ++d) {
    const auto src = static_cast<Eigen::Index>(source_column_[d]);
    if (spec_.covariates[d].piecewise) {
      out.x.col(col + static_cast<Eigen::Index>(period)) = raw.col(src);
      col += static_cast<Eigen::Index>(spec_.period_count());
    } else {
      out.x.col(col) = raw.col(src);
      ++col;
    }
  }

  out.groups.assign(families_.size(), std::vector<std::int32_t>(dyads.size(), -1));
  for (std::size_t i = 0; i < dyads.size(); ++i) {
    const auto [s, c] = dyads[i];
    if (species_family_ >= 0) out.groups[static_cast<std::size_t>(species_family_)][i] = s.value;
    if (region_family_ >= 0) out.groups[static_cast<std::size_t>(region_family_)][i] = c.value;
    if (dyadic_family_ >= 0) {
      const auto last = snap.last_invader(c);
      const std::int32_t last_rank = last ? top_rank_[static_cast<std::size_t>(last->value)] : -1;
      out.groups[static_cast<std::size_t>(dyadic_family_)][i] = dyadic_group_index(
          last_rank, top_rank_[static_cast<std::size_t>(s.value)], spec_.random_effects.dyadic, top_k_);
    }
  }
  out.event_rows.clear();
}

DesignRow DesignAssembler::row(const ProcessSnapshot& snap, Dyad dyad) const {
  EventBlock b;
  assemble(snap, std::span<const Dyad>(&dyad, 1), b);
  DesignRow r;
  r.dyad = dyad;
  r.time = snap.time();
  r.fixed = b.x.row(0).transpose();
  if (species_family_ >= 0) r.species_group = b.groups[static_cast<std::size_t>(species_family_)][0];
  if (region_family_ >= 0) r.region_group = b.groups[static_cast<std::size_t>(region_family_)][0];
  if (dyadic_family_ >= 0) r.dyadic_group = b.groups[static_cast<std::size_t>(dyadic_family_)][0];
  return r;
}

DesignRow assemble_design_row(Dyad dyad, double t, const OccupancyState& occ, const History& history,
                              const CovariatePanels& panels, const ModelSpec& spec, const NodeIndex& species,
                              std::vector<SpeciesId> top_species) {
  std::vector<std::string> names;
  for (const auto& c : spec.covariates) names.push_back(c.name);
  PanelCovariates source(panels, names, spec);
  DesignAssembler assembler(source, spec, species, panels.regions, std::move(top_species));
  ProcessSnapshot snap(t, occ, history, assembler.snapshot_options(false));
  return assembler.row(snap, dyad);
}

// ---- designs ---------------------------------------------------------------

MaterializedDesign::MaterializedDesign(std::vector<EventBlock> blocks, std::vector<ColumnInfo> columns,
                                       std::vector<RandomFamily> families, Window window)
    : blocks_(std::move(blocks)) {
  columns_ = std::move(columns);
  families_ = std::move(families);
  window_ = window;
  for (const auto& b : blocks_) n_events_ += b.event_rows.size();
}

MaterializedDesign::MaterializedDesign(const Design& source) {
  columns_ = source.columns();
  families_ = source.families();
  window_ = source.window();
  n_events_ = source.event_count();
  blocks_.reserve(source.block_count());
  EventBlock scratch;
  for (std::size_t k = 0; k < source.block_count(); ++k) blocks_.push_back(source.block(k, scratch));
}

RemDesign::RemDesign(const EventSequence& seq, const OccupancyState& occ, const CovariateSource& source,
                     const ModelSpec& spec)
    : seq_(&seq),
      occ_(&occ),
      top_(spec.random_effects.dyadic != DyadicEffect::none ? top_invaders(seq, spec.top_k)
                                                            : std::vector<SpeciesId>{}),
      assembler_(source, spec, seq.species(), seq.regions(), top_) {
  spec.validate(seq.window());
  if (occ.species_count() != seq.species().size() || occ.region_count() != seq.regions().size()) {
    throw InputError("occupancy state does not match the event sequence node sets");
  }
  columns_ = assembler_.columns();
  families_ = assembler_.families();
  window_ = seq.window();
  n_events_ = seq.size();
  times_ = seq.distinct_times();
  groups_ = seq.time_groups();
  for (double t : times_) {
    for (std::size_t s = 0; s < occ.species_count(); ++s) {
      for (double e : occ.entries_of(SpeciesId{static_cast<std::int32_t>(s)})) total_rows_ += e < t ? 0 : 1;
    }
  }
}

const EventBlock& RemDesign::block(std::size_t k, EventBlock& scratch) const {
  const double t = times_[k];
  ProcessSnapshot snap(t, *occ_, seq_->history_before(t), assembler_.snapshot_options(false));
  const RiskSet risk = risk_set_at(*seq_, *occ_, t);
  assembler_.assemble(snap, risk.dyads, scratch);
  const auto [first, last] = groups_[k];
  for (std::size_t i = first; i < last; ++i) {
    const Dyad d{(*seq_)[i].sender, (*seq_)[i].receiver};
    auto it = std::lower_bound(risk.dyads.begin(), risk.dyads.end(), d);
    if (it == risk.dyads.end() || *it != d) {
      throw InputError("event (" + seq_->species().name(d.species.value) + ", " +
                       seq_->regions().name(d.region.value) + ") is not in its risk set");
    }
    scratch.event_rows.push_back(static_cast<std::int32_t>(it - risk.dyads.begin()));
  }
  return scratch;
}

std::unique_ptr<MaterializedDesign> materialize_if_small(const RemDesign& design, std::size_t max_values) {
  const std::size_t per_row = design.column_count() + design.families().size();
  if (design.total_rows() * std::max<std::size_t>(per_row, 1) > max_values) return nullptr;
  return std::make_unique<MaterializedDesign>(design);
}

}  // namespace rem
