#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "rem/errors.hpp"
#include "rem/event_core.hpp"
#include "support.hpp"

using namespace rem;

namespace {

std::vector<std::pair<std::string, std::string>> named(const RiskSet& rs, const EventSequence& seq) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto d : rs.dyads) out.emplace_back(seq.species().name(d.species.value), seq.regions().name(d.region.value));
  return out;
}

}  // namespace

TEST_CASE("micro example risk sets") {
  auto f = remtest::make_two_invasions();
  const auto& seq = f->data.sequence;
  const auto& occ = f->data.occupancy;
  using P = std::vector<std::pair<std::string, std::string>>;
  CHECK(named(risk_set_at(seq, occ, 1900.0), seq) == P{{"tuna", "B"}, {"tuna", "C"}, {"dove", "A"}, {"dove", "B"}});
  CHECK(named(risk_set_at(seq, occ, 1950.0), seq) == P{{"tuna", "C"}, {"dove", "A"}, {"dove", "B"}});
  // after both events
  CHECK(named(risk_set_at(seq, occ, 1951.0), seq) == P{{"tuna", "C"}, {"dove", "B"}});
}

TEST_CASE("duplicate records collapse to the earliest year") {
  NodeIndex regions({"FR", "DE"});
  std::vector<FirstRecord> recs{{"muskrat", "FR", 1940}, {"muskrat", "FR", 1930}};
  auto data = build_event_sequence(recs, {1880, 2005}, std::vector<NativeRange>{{"muskrat", "DE"}}, regions);
  REQUIRE(data.sequence.size() == 1);
  CHECK(data.sequence[0].time == 1930.0);
  CHECK(data.report.duplicates_collapsed == 1);
}

TEST_CASE("invalid records are rejected") {
  NodeIndex regions({"A", "B", "C"});
  std::vector<NativeRange> natives{{"dove", "C"}};
  std::vector<FirstRecord> native_rec{{"dove", "C", 1900}};
  try {
    build_event_sequence(native_rec, {1880, 2005}, natives, regions);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("native-region record") != std::string::npos);
  }
  std::vector<FirstRecord> unknown{{"dove", "A", 1900}, {"dove", "Z", 1901}};
  try {
    build_event_sequence(unknown, {1880, 2005}, natives, regions);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("Z") != std::string::npos);
  }
  CHECK_THROWS_AS(build_event_sequence(std::vector<FirstRecord>{}, {1880, 2005}, natives, regions), InputError);
}

TEST_CASE("window handling: early records become occupancy, late ones are dropped") {
  NodeIndex regions({"A", "B", "C", "D"});
  std::vector<NativeRange> natives{{"s", "A"}};
  std::vector<FirstRecord> recs{{"s", "B", 1850}, {"s", "C", 1900}, {"s", "D", 2010}};
  auto data = build_event_sequence(recs, {1880, 2005}, natives, regions);
  REQUIRE(data.sequence.size() == 1);
  CHECK(data.report.dropped_before_window == 1);
  CHECK(data.report.dropped_after_window == 1);
  const SpeciesId s{0};
  CHECK(data.occupancy.occupied_before(s, RegionId{1}, 1880.0));
  CHECK(data.occupancy.origin(s, RegionId{0}) == Origin::native);
  CHECK(data.occupancy.origin(s, RegionId{3}) == Origin::absent);
}

TEST_CASE("sequence validation") {
  NodeIndex sp({"s"}), rg({"A", "B"});
  CHECK_THROWS_AS(EventSequence({{SpeciesId{0}, RegionId{0}, 1.0}}, {2.0, 3.0}, sp, rg), InputError);
  CHECK_THROWS_AS(EventSequence({{SpeciesId{0}, RegionId{5}, 2.5}}, {2.0, 3.0}, sp, rg), InputError);
  CHECK_THROWS_AS(
      EventSequence({{SpeciesId{0}, RegionId{1}, 2.5}, {SpeciesId{0}, RegionId{1}, 2.7}}, {2.0, 3.0}, sp, rg),
      InputError);
}

TEST_CASE("equal times keep input order") {
  NodeIndex sp({"a", "b", "c"}), rg({"X", "Y"});
  EventSequence seq({{SpeciesId{2}, RegionId{0}, 5.0}, {SpeciesId{0}, RegionId{1}, 3.0}, {SpeciesId{1}, RegionId{0}, 5.0}},
                    {0.0, 10.0}, sp, rg);
  CHECK(seq[0].sender.value == 0);
  CHECK(seq[1].sender.value == 2);
  CHECK(seq[2].sender.value == 1);
  CHECK(seq.distinct_times() == std::vector<double>{3.0, 5.0});
  CHECK(seq.count_before(5.0) == 1);
  CHECK(seq.history_before(5.0).size() == 1);
}

TEST_CASE("exhausted species have an empty risk set") {
  NodeIndex regions({"A", "B"});
  std::vector<NativeRange> natives{{"s", "A"}, {"t", "A"}};
  std::vector<FirstRecord> recs{{"s", "B", 1900}, {"t", "B", 1950}};
  auto data = build_event_sequence(recs, {1880, 2005}, natives, regions);
  auto rs = risk_set_at(data.sequence, data.occupancy, 1920.0);
  REQUIRE(rs.dyads.size() == 1);
  CHECK(rs.dyads[0].species.value == 1);
}

TEST_CASE("random sequences: replay, membership and shrinking risk sets") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    const int S = 6, C = 7;
    std::vector<std::string> rn;
    for (int c = 0; c < C; ++c) rn.push_back("r" + std::to_string(c));
    NodeIndex regions(rn);
    std::vector<NativeRange> natives;
    std::vector<FirstRecord> recs;
    for (int s = 0; s < S; ++s) {
      const std::string name = "s" + std::to_string(s);
      std::vector<int> order(C);
      for (int c = 0; c < C; ++c) order[static_cast<std::size_t>(c)] = c;
      std::shuffle(order.begin(), order.end(), rng);
      natives.push_back({name, rn[static_cast<std::size_t>(order[0])]});
      const int k = static_cast<int>(rng() % 5);
      for (int i = 1; i <= k; ++i)
        recs.push_back({name, rn[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])], 1880.0 + static_cast<double>(rng() % 120)});
    }
    if (recs.empty()) continue;
    auto data = build_event_sequence(recs, {1880, 2005}, natives, regions);
    const auto& seq = data.sequence;
    for (std::size_t i = 1; i < seq.size(); ++i) CHECK(seq[i - 1].time <= seq[i].time);
    for (const auto& e : seq.events()) CHECK(risk_set_at(seq, data.occupancy, e.time).contains({e.sender, e.receiver}));

    std::size_t occupied_end = 0;
    for (std::size_t s = 0; s < data.occupancy.species_count(); ++s)
      for (double e : data.occupancy.entries_of(SpeciesId{static_cast<std::int32_t>(s)})) occupied_end += e <= 2005.0;
    std::size_t kept_natives = 0;
    for (const auto& n : natives) kept_natives += seq.species().contains(n.species);
    CHECK(occupied_end == kept_natives + seq.size());

    std::size_t prev = SIZE_MAX;
    for (double t = 1880; t <= 2005; t += 5) {
      auto n = risk_set_at(seq, data.occupancy, t).dyads.size();
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("top invaders rank by event count") {
  NodeIndex sp({"a", "b", "c"}), rg({"X", "Y", "Z"});
  EventSequence seq({{SpeciesId{1}, RegionId{0}, 1.0}, {SpeciesId{1}, RegionId{1}, 2.0}, {SpeciesId{0}, RegionId{2}, 3.0}},
                    {0.0, 10.0}, sp, rg);
  auto top = top_invaders(seq, 5);
  REQUIRE(top.size() == 2);
  CHECK(top[0].value == 1);
  CHECK(top[1].value == 0);
  CHECK(top_invaders(seq, 1).size() == 1);
}
