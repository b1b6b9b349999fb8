#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rem/covariates.hpp"
#include "rem/event_core.hpp"
#include "rem/model_spec.hpp"

namespace rem {

// lambda0(t) = rates[j] on [breaks[j], breaks[j+1]); the last rate holds
// from its break onwards.
struct PiecewiseBaseline {
  std::vector<double> breaks;
  std::vector<double> rates;

  static PiecewiseBaseline constant(double rate, double from);
  double rate_at(double t) const;
  // First break strictly after t (+inf when none).
  double next_break_after(double t) const;
  void validate() const;
};

struct GenerativeSpec {
  ModelSpec model;  // covariate columns, periods and random-effect families
  Eigen::VectorXd beta;
  PiecewiseBaseline baseline;
  Window window;
  // Standard deviations of Gaussian frailties, one per family of `model`
  // (species, region, dyadic order). Missing entries mean 0.
  std::vector<double> frailty_sd;
  std::vector<SpeciesId> top_species;  // dyadic families only
  std::size_t max_events = 0;          // 0 = until the window closes
  bool annual_times = false;           // report floor(t) instead of exact times
};

struct SimulationResult {
  std::vector<Event> events;  // time order
  bool ended_early = false;   // every rate was 0 with time remaining
  std::vector<Eigen::VectorXd> frailties;  // drawn values per family
  double end_time = 0.0;
};

// Competing exponential clocks. Covariates are recomputed after every event
// and at every year boundary and baseline break.
SimulationResult simulate(const GenerativeSpec& spec, const OccupancyState& initial, const CovariateSource& source,
                          const NodeIndex& species, const NodeIndex& regions, std::uint64_t seed);

// Softmax probability of row `event_index`, written directly in long double.
double oracle_event_prob(std::span<const double> beta, std::span<const std::vector<double>> rows,
                         std::size_t event_index);

// A toy world: species x regions, `natives_per_species` native regions each,
// and i.i.d. standard-normal static dyadic covariates named x1, x2, ...
struct SyntheticWorld {
  NodeIndex species;
  NodeIndex regions;
  std::vector<NativeRange> natives;
  OccupancyState occupancy;
  std::unique_ptr<StaticDyadCovariates> covariates;
};

SyntheticWorld make_synthetic_world(std::size_t n_species, std::size_t n_regions, std::size_t n_covariates,
                                    std::size_t natives_per_species, std::uint64_t seed);

EventSequence to_sequence(const SimulationResult& sim, const Window& window, const NodeIndex& species,
                          const NodeIndex& regions);
std::vector<FirstRecord> to_first_records(const SimulationResult& sim, const NodeIndex& species,
                                          const NodeIndex& regions);

}  // namespace rem
