#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "doctest.h"
#include "rem/errors.hpp"
#include "rem/estimator.hpp"
#include "rem/ingest.hpp"
#include "rem/simulator.hpp"
#include "support.hpp"

using namespace rem;
using Eigen::VectorXd;

namespace {

GenerativeSpec plain_spec(std::size_t n_cov, double rate, Window w, std::size_t max_events = 0) {
  GenerativeSpec g;
  for (std::size_t j = 0; j < n_cov; ++j) g.model.covariates.push_back({"x" + std::to_string(j + 1), false});
  g.beta = VectorXd::Zero(static_cast<Eigen::Index>(n_cov));
  g.baseline = PiecewiseBaseline::constant(rate, w.begin);
  g.window = w;
  g.max_events = max_events;
  return g;
}

}  // namespace

TEST_CASE("oracle probabilities") {
  const double beta[] = {-1.0};
  std::vector<std::vector<double>> t1{{1}, {3}, {3}, {2}};
  CHECK(oracle_event_prob(beta, t1, 0) == doctest::Approx(0.6103).epsilon(1e-4));
  CHECK(std::round(oracle_event_prob(beta, t1, 0) * 100) / 100 == doctest::Approx(0.61));
  std::vector<std::vector<double>> twin{{0.7}, {0.7}};
  CHECK(oracle_event_prob(beta, twin, 1) == doctest::Approx(0.5).epsilon(1e-15));
  const double zero[] = {0.0};
  for (std::size_t i = 0; i < 4; ++i) CHECK(oracle_event_prob(zero, t1, i) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS(oracle_event_prob(beta, t1, 4));
}

TEST_CASE("estimator probabilities equal the oracle") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> N(0.0, 2.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 30), p = 1 + static_cast<int>(rng() % 5);
    EventBlock b;
    b.x.resize(n, p);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < p; ++j) {
        b.x(r, j) = N(rng);
        rows[static_cast<std::size_t>(r)].push_back(b.x(r, j));
      }
    VectorXd beta(p);
    for (int j = 0; j < p; ++j) beta[j] = N(rng);
    const auto probs = event_probabilities(b, beta);
    for (int r = 0; r < n; ++r) {
      const double o = oracle_event_prob(std::span<const double>(beta.data(), static_cast<std::size_t>(p)), rows,
                                         static_cast<std::size_t>(r));
      CHECK(std::abs(probs[r] - o) <= 1e-12);
    }
  }
}

TEST_CASE("piecewise baseline") {
  PiecewiseBaseline b{{0.0, 10.0, 20.0}, {1.0, 0.0, 2.5}};
  CHECK_NOTHROW(b.validate());
  CHECK(b.rate_at(-5.0) == 1.0);
  CHECK(b.rate_at(10.0) == 0.0);
  CHECK(b.rate_at(99.0) == 2.5);
  CHECK(b.next_break_after(10.0) == 20.0);
  CHECK(std::isinf(b.next_break_after(20.0)));
  CHECK_THROWS_AS((PiecewiseBaseline{{0.0, 0.0}, {1.0, 1.0}}.validate()), InputError);
  CHECK_THROWS_AS((PiecewiseBaseline{{0.0}, {-1.0}}.validate()), InputError);
  CHECK_THROWS_AS((PiecewiseBaseline{{0.0}, {}}.validate()), InputError);
}

TEST_CASE("null model: scaled waiting times are unit exponential") {
  auto w = make_synthetic_world(100, 60, 1, 1, 5);
  // about one event every two years, so most waits cross year boundaries
  auto g = plain_spec(1, 1e-4, {0.0, 1e5}, 5000);
  auto sim = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 77);
  REQUIRE(sim.events.size() == 5000);
  std::vector<double> scaled;
  double prev = 0.0;
  double at_risk = 100.0 * 60.0 - 100.0;
  for (const auto& e : sim.events) {
    scaled.push_back((e.time - prev) * at_risk * 1e-4);
    prev = e.time;
    at_risk -= 1.0;
  }
  const double p = remtest::ks_pvalue(scaled, [](double x) { return 1.0 - std::exp(-x); });
  CHECK(p > 0.01);
}

TEST_CASE("a zero-rate dyad is never chosen, and the run ends early") {
  auto w = make_synthetic_world(4, 5, 1, 1, 9);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t c = 0; c < 5; ++c) w.covariates->at(SpeciesId{static_cast<int>(s)}, RegionId{static_cast<int>(c)}, 0) = 0.0;
  // species 0 can never reach region 4 (unless native there)
  const SpeciesId s0{0};
  const RegionId c4{4};
  const bool native = w.occupancy.origin(s0, c4) == Origin::native;
  w.covariates->at(s0, c4, 0) = -std::numeric_limits<double>::infinity();
  auto g = plain_spec(1, 0.5, {0.0, 1000.0});
  g.beta << 1.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto sim = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, seed);
    for (const auto& e : sim.events) CHECK_FALSE((e.sender == s0 && e.receiver == c4));
    if (!native) {
      CHECK(sim.ended_early);
      CHECK(sim.events.size() == 4 * 4 - 1);
    }
  }
}

TEST_CASE("micro example: first-event frequencies") {
  auto f = remtest::make_two_invasions();
  const auto& seq = f->data.sequence;
  OccupancyState start(2, 3);
  const SpeciesId tuna{seq.species().find("tuna")}, dove{seq.species().find("dove")};
  const RegionId A{0}, B{1}, C{2};
  start.set_native(tuna, A);
  start.set_native(dove, C);
  GenerativeSpec g;
  g.model = f->spec;
  g.beta = VectorXd::Constant(1, -1.0);
  g.baseline = PiecewiseBaseline::constant(1.0, 1880.0);
  g.window = {1880.0, 2005.0};
  g.max_events = 1;
  std::map<std::pair<int, int>, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto sim = simulate(g, start, *f->source, seq.species(), seq.regions(), static_cast<std::uint64_t>(i));
    REQUIRE(sim.events.size() == 1);
    ++counts[{sim.events[0].sender.value, sim.events[0].receiver.value}];
  }
  const double beta[] = {-1.0};
  std::vector<std::vector<double>> rows{{1}, {3}, {3}, {2}};
  const std::pair<int, int> dyads[] = {{tuna.value, B.value}, {tuna.value, C.value}, {dove.value, A.value}, {dove.value, B.value}};
  for (std::size_t i = 0; i < 4; ++i) {
    const double freq = counts[dyads[i]] / static_cast<double>(draws);
    CHECK(std::abs(freq - oracle_event_prob(beta, rows, i)) < 0.01);
  }
}

TEST_CASE("same seed, same sequence; different seed, different sequence") {
  auto w = make_synthetic_world(10, 8, 2, 1, 1);
  auto g = plain_spec(2, 0.05, {0.0, 50.0}, 60);
  g.beta << -1.0, 0.5;
  g.model.random_effects.region = true;
  g.frailty_sd = {1.0};
  auto a = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 42);
  auto b = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 42);
  auto c = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 43);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].time == b.events[i].time);
    CHECK(a.events[i].sender == b.events[i].sender);
    CHECK(a.events[i].receiver == b.events[i].receiver);
  }
  CHECK(a.frailties[0] == b.frailties[0]);
  CHECK(a.frailties[0] != c.frailties[0]);
  bool differs = a.events.size() != c.events.size();
  for (std::size_t i = 0; !differs && i < a.events.size(); ++i) differs = a.events[i].time != c.events[i].time;
  CHECK(differs);
}

TEST_CASE("frailty draws have the requested spread") {
  auto w = make_synthetic_world(5, 2000, 1, 1, 2);
  auto g = plain_spec(1, 1e-3, {0.0, 10.0}, 1);
  g.model.random_effects.region = true;
  g.frailty_sd = {0.8};
  auto sim = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 3);
  REQUIRE(sim.frailties.size() == 1);
  const auto& b = sim.frailties[0];
  const double sd = std::sqrt((b.array() - b.mean()).square().sum() / static_cast<double>(b.size() - 1));
  CHECK(sd == doctest::Approx(0.8).epsilon(0.08));
}

TEST_CASE("no events while the baseline is zero; annual times are floored") {
  auto w = make_synthetic_world(6, 6, 1, 1, 4);
  auto g = plain_spec(1, 0.0, {0.0, 30.0});
  g.baseline = {{0.0, 10.5}, {0.0, 0.2}};
  auto sim = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 8);
  REQUIRE_FALSE(sim.events.empty());
  CHECK(sim.events.front().time >= 10.5);
  for (std::size_t i = 1; i < sim.events.size(); ++i) CHECK(sim.events[i].time >= sim.events[i - 1].time);
  g.annual_times = true;
  auto annual = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 8);
  REQUIRE(annual.events.size() == sim.events.size());
  for (std::size_t i = 0; i < sim.events.size(); ++i) CHECK(annual.events[i].time == std::floor(sim.events[i].time));
}

TEST_CASE("bad specs are rejected") {
  auto w = make_synthetic_world(3, 3, 2, 1, 4);
  auto g = plain_spec(2, 0.1, {0.0, 10.0});
  g.beta = VectorXd::Zero(3);
  CHECK_THROWS_AS(simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 1), InputError);
  g.beta = VectorXd::Zero(2);
  g.window = {5.0, 5.0};
  CHECK_THROWS_AS(simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 1), InputError);
  CHECK_THROWS_AS(make_synthetic_world(3, 3, 1, 3, 1), InputError);
}

TEST_CASE("simulated records survive a trip through first_records.csv") {
  auto w = make_synthetic_world(8, 7, 1, 1, 6);
  auto g = plain_spec(1, 0.02, {1880.0, 2005.0}, 40);
  g.baseline = PiecewiseBaseline::constant(0.02, 1880.0);
  g.annual_times = true;
  auto sim = simulate(g, w.occupancy, *w.covariates, w.species, w.regions, 10);
  auto recs = to_first_records(sim, w.species, w.regions);
  const auto dir = std::filesystem::temp_directory_path() / "rem_sim_roundtrip";
  std::filesystem::create_directories(dir);
  write_first_records(dir / "first_records.csv", recs);
  RegionResolver res(w.regions);
  auto back = load_first_records(dir / "first_records.csv", res);
  std::filesystem::remove_all(dir);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].species == recs[i].species);
    CHECK(back[i].region == recs[i].region);
    CHECK(back[i].year == recs[i].year);
  }
  auto data = build_event_sequence(back, g.window, w.natives, w.regions);
  CHECK(data.sequence.size() == sim.events.size());
}

TEST_CASE("fitting simulated data recovers the coefficients") {
  auto w = make_synthetic_world(40, 30, 2, 1, 13);
  auto g = plain_spec(2, 1e-3, {0.0, 1e4}, 800);
  g.beta << -1.0, 0.5;
  auto d = remtest::simulate_data(w, g, 5);
  auto fit = fit_fixed(*d->design);
  for (Eigen::Index j = 0; j < 2; ++j) CHECK(std::abs(fit.beta[j] - g.beta[j]) < 4.0 * fit.coefficients[static_cast<std::size_t>(j)].se);
}
