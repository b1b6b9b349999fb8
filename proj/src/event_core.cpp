#include "rem/event_core.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "rem/errors.hpp"

namespace rem {

EventSequence::EventSequence(std::vector<Event> events, Window window, NodeIndex species, NodeIndex regions)
    : events_(std::move(events)), window_(window), species_(std::move(species)), regions_(std::move(regions)) {
  if (!(window_.begin <= window_.end)) throw InputError("empty observation window");
  std::stable_sort(events_.begin(), events_.end(),
                   [](const Event& a, const Event& b) { return a.time < b.time; });
  const auto n_species = static_cast<std::int32_t>(species_.size());
  const auto n_regions = static_cast<std::int32_t>(regions_.size());
  std::vector<char> seen(static_cast<std::size_t>(n_species) * static_cast<std::size_t>(n_regions), 0);
  for (const auto& e : events_) {
    if (e.sender.value < 0 || e.sender.value >= n_species || e.receiver.value < 0 ||
        e.receiver.value >= n_regions) {
      throw InputError("event references an undeclared node");
    }
    if (!window_.contains(e.time)) {
      std::ostringstream msg;
      msg << "event time " << e.time << " outside window [" << window_.begin << ", " << window_.end << "]";
      throw InputError(msg.str());
    }
    auto& flag = seen[static_cast<std::size_t>(e.sender.value) * static_cast<std::size_t>(n_regions) +
                      static_cast<std::size_t>(e.receiver.value)];
    if (flag) {
      throw InputError("repeated event for (" + species_.name(e.sender.value) + ", " +
                       regions_.name(e.receiver.value) + ")");
    }
    flag = 1;
  }
}

std::size_t EventSequence::count_before(double t) const {
  auto it = std::lower_bound(events_.begin(), events_.end(), t,
                             [](const Event& e, double v) { return e.time < v; });
  return static_cast<std::size_t>(it - events_.begin());
}

History EventSequence::history_before(double t) const {
  return History(std::span<const Event>(events_.data(), count_before(t)), t);
}

std::vector<double> EventSequence::distinct_times() const {
  std::vector<double> out;
  for (const auto& e : events_) {
    if (out.empty() || out.back() != e.time) out.push_back(e.time);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> EventSequence::time_groups() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < events_.size()) {
    std::size_t j = i + 1;
    while (j < events_.size() && events_[j].time == events_[i].time) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

OccupancyState::OccupancyState(std::size_t n_species, std::size_t n_regions)
    : n_species_(n_species), n_regions_(n_regions), entry_(n_species * n_regions, kNever) {}

void OccupancyState::set_native(SpeciesId s, RegionId c) { entry_[index(s, c)] = kNative; }

void OccupancyState::set_invaded(SpeciesId s, RegionId c, double time) {
  auto& e = entry_[index(s, c)];
  e = std::min(e, time);
}

Origin OccupancyState::origin(SpeciesId s, RegionId c) const {
  const double e = entry_time(s, c);
  if (e == kNative) return Origin::native;
  if (e == kNever) return Origin::absent;
  return Origin::invaded;
}

std::vector<RegionId> OccupancyState::occupied_regions_before(SpeciesId s, double t) const {
  std::vector<RegionId> out;
  auto row = entries_of(s);
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (row[c] < t) out.push_back(RegionId{static_cast<std::int32_t>(c)});
  }
  return out;
}

bool RiskSet::contains(Dyad d) const { return std::find(dyads.begin(), dyads.end(), d) != dyads.end(); }

EventData build_event_sequence(std::span<const FirstRecord> records, Window window,
                               std::span<const NativeRange> natives, const NodeIndex& regions) {
  if (records.empty()) throw InputError("no first records");

  NodeIndex species;
  struct Kept {
    std::size_t row;
    double year;
  };
  std::map<std::pair<std::int32_t, std::int32_t>, Kept> earliest;
  EventBuildReport report;
  report.records = records.size();

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto c = regions.find(r.region);
    if (c < 0) {
      std::ostringstream msg;
      msg << "unknown region '" << r.region << "' in first record row " << i + 1 << " (" << r.species << ", "
          << r.region << ", " << r.year << ")";
      throw InputError(msg.str());
    }
    const auto s = species.intern(r.species);
    auto [it, inserted] = earliest.try_emplace({s, c}, Kept{i, r.year});
    if (!inserted) {
      ++report.duplicates_collapsed;
      if (r.year < it->second.year) it->second = Kept{i, r.year};
    }
  }

  OccupancyState occ(species.size(), regions.size());
  for (const auto& n : natives) {
    const auto s = species.find(n.species);
    if (s < 0) continue;  // species outside the study group
    const auto c = regions.find(n.region);
    if (c < 0) throw InputError("unknown region '" + n.region + "' in native range of '" + n.species + "'");
    occ.set_native(SpeciesId{s}, RegionId{c});
  }

  std::vector<std::pair<std::size_t, Event>> kept;
  for (const auto& [key, k] : earliest) {
    SpeciesId s{key.first};
    RegionId c{key.second};
    if (occ.origin(s, c) == Origin::native) {
      std::ostringstream msg;
      msg << "native-region record: '" << species.name(s.value) << "' recorded in its native region '"
          << regions.name(c.value) << "' (row " << k.row + 1 << ")";
      throw InputError(msg.str());
    }
    if (k.year < window.begin) {
      ++report.dropped_before_window;
      occ.set_invaded(s, c, k.year);
    } else if (k.year > window.end) {
      ++report.dropped_after_window;
    } else {
      kept.emplace_back(k.row, Event{s, c, k.year});
    }
  }
  // input order within equal times
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Event> events;
  events.reserve(kept.size());
  for (const auto& [row, e] : kept) {
    events.push_back(e);
    occ.set_invaded(e.sender, e.receiver, e.time);
  }
  EventSequence seq(std::move(events), window, std::move(species), regions);
  return EventData{std::move(seq), std::move(occ), report};
}

RiskSet risk_set_at(const EventSequence& seq, const OccupancyState& occ, double t) {
  (void)seq;
  RiskSet out;
  out.time = t;
  for (std::size_t s = 0; s < occ.species_count(); ++s) {
    auto row = occ.entries_of(SpeciesId{static_cast<std::int32_t>(s)});
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!(row[c] < t)) {
        out.dyads.push_back(Dyad{SpeciesId{static_cast<std::int32_t>(s)}, RegionId{static_cast<std::int32_t>(c)}});
      }
    }
  }
  return out;
}

std::vector<SpeciesId> top_invaders(const EventSequence& seq, std::size_t k) {
  std::vector<std::size_t> counts(seq.species().size(), 0);
  for (const auto& e : seq.events()) ++counts[static_cast<std::size_t>(e.sender.value)];
  std::vector<std::int32_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
  });
  std::vector<SpeciesId> out;
  for (std::size_t i = 0; i < order.size() && out.size() < k; ++i) {
    if (counts[static_cast<std::size_t>(order[i])] == 0) break;
    out.push_back(SpeciesId{order[i]});
  }
  return out;
}

}  // namespace rem
