#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rem/types.hpp"

namespace rem {

// A first record of a species in a region: the relational event (s, c, t).
struct Event {
  SpeciesId sender;
  RegionId receiver;
  double time = 0.0;
};

// Events strictly before a cutoff time, in time order.
class History {
 public:
  History() = default;
  History(std::span<const Event> events, double cutoff) : events_(events), cutoff_(cutoff) {}

  std::span<const Event> events() const { return events_; }
  double cutoff() const { return cutoff_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

 private:
  std::span<const Event> events_;
  double cutoff_ = 0.0;
};

// Time-ordered event stream over a fixed window with declared node sets.
class EventSequence {
 public:
  EventSequence() = default;
  // Stable-sorts by time; throws InputError when an event falls outside the
  // window, references an undeclared node, or repeats a (sender, receiver) pair.
  EventSequence(std::vector<Event> events, Window window, NodeIndex species, NodeIndex regions);

  std::span<const Event> events() const { return events_; }
  const Event& operator[](std::size_t i) const { return events_[i]; }
  std::size_t size() const { return events_.size(); }
  const Window& window() const { return window_; }
  const NodeIndex& species() const { return species_; }
  const NodeIndex& regions() const { return regions_; }

  // Number of events with time < t.
  std::size_t count_before(double t) const;
  History history_before(double t) const;
  // Distinct event times, ascending, with the [first, last) event ranges.
  std::vector<double> distinct_times() const;
  std::vector<std::pair<std::size_t, std::size_t>> time_groups() const;

 private:
  std::vector<Event> events_;
  Window window_;
  NodeIndex species_;
  NodeIndex regions_;
};

enum class Origin : std::uint8_t { absent, native, invaded };

// Which regions each species occupies over time. Each (species, region) cell
// stores an entry time: -inf for native ranges, the first-record time for
// invasions (possibly before the window), +inf when never occupied.
class OccupancyState {
 public:
  static constexpr double kNever = std::numeric_limits<double>::infinity();
  static constexpr double kNative = -std::numeric_limits<double>::infinity();

  OccupancyState() = default;
  OccupancyState(std::size_t n_species, std::size_t n_regions);

  std::size_t species_count() const { return n_species_; }
  std::size_t region_count() const { return n_regions_; }

  void set_native(SpeciesId s, RegionId c);
  // Occupancy is monotone: an earlier entry time is never replaced by a later one.
  void set_invaded(SpeciesId s, RegionId c, double time);

  double entry_time(SpeciesId s, RegionId c) const { return entry_[index(s, c)]; }
  Origin origin(SpeciesId s, RegionId c) const;
  // State at t-: only entries strictly before t count.
  bool occupied_before(SpeciesId s, RegionId c, double t) const { return entry_time(s, c) < t; }
  // State at t+: entries at t count.
  bool occupied_at(SpeciesId s, RegionId c, double t) const { return entry_time(s, c) <= t; }

  std::vector<RegionId> occupied_regions_before(SpeciesId s, double t) const;
  std::span<const double> entries_of(SpeciesId s) const {
    return {entry_.data() + static_cast<std::size_t>(s.value) * n_regions_, n_regions_};
  }

 private:
  std::size_t index(SpeciesId s, RegionId c) const {
    return static_cast<std::size_t>(s.value) * n_regions_ + static_cast<std::size_t>(c.value);
  }

  std::size_t n_species_ = 0;
  std::size_t n_regions_ = 0;
  std::vector<double> entry_;
};

struct RiskSet {
  double time = 0.0;
  std::vector<Dyad> dyads;

  bool contains(Dyad d) const;
};

// Raw first record as read from a table.
struct FirstRecord {
  std::string species;
  std::string region;
  double year = 0.0;
};

struct NativeRange {
  std::string species;
  std::string region;
};

struct EventBuildReport {
  std::size_t records = 0;
  std::size_t dropped_before_window = 0;  // kept as pre-window occupancy
  std::size_t dropped_after_window = 0;
  std::size_t duplicates_collapsed = 0;
};

struct EventData {
  EventSequence sequence;
  OccupancyState occupancy;
  EventBuildReport report;
};

// Species are indexed in order of first appearance in `records`; regions come
// from the harmonized `regions` list.
EventData build_event_sequence(std::span<const FirstRecord> records, Window window,
                               std::span<const NativeRange> natives, const NodeIndex& regions);

// All dyads (s, c) with c unoccupied by s at t-, species-major order.
RiskSet risk_set_at(const EventSequence& seq, const OccupancyState& occ, double t);

// Species ranked by number of events in the sequence (ties by index), at most k.
std::vector<SpeciesId> top_invaders(const EventSequence& seq, std::size_t k);

}  // namespace rem
