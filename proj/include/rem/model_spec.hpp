#pragma once

#include <string>
#include <vector>

#include "rem/types.hpp"

namespace rem {

enum class Ties { breslow, efron };

enum class DyadicEffect { none, ordered, symmetric };

// Source regions for the trade and temperature statistics.
enum class SourceRegions { occupied, invaded_only };

// What a non-top-k invasion does to the last-invader indicator.
enum class LastInvaderRule { skip, reset };

struct CovariateDecl {
  std::string name;
  bool piecewise = false;  // one coefficient per period when true
};

struct RandomEffects {
  bool species = false;
  bool region = false;
  DyadicEffect dyadic = DyadicEffect::none;

  bool any() const { return species || region || dyadic != DyadicEffect::none; }
};

struct ModelSpec {
  std::vector<CovariateDecl> covariates;
  // period j covers [breaks[j], breaks[j+1]); the last period is closed.
  std::vector<double> period_breaks;
  RandomEffects random_effects;
  Ties ties = Ties::efron;
  double decay = 0.95;
  std::size_t top_k = 30;
  LastInvaderRule last_invader = LastInvaderRule::skip;
  SourceRegions source_regions = SourceRegions::occupied;
  double distance_unit_km = 1000.0;
  bool log_sampling_effort = true;

  std::size_t period_count() const { return period_breaks.empty() ? 1 : period_breaks.size() - 1; }
  // Index of the period containing t (clamped to the first/last period).
  std::size_t period_of(double t) const;
  // "1880-1905" style label; integer breaks print the inclusive last year.
  std::string period_label(std::size_t j) const;

  // Throws InputError unless the periods partition the window and names are unique.
  void validate(const Window& window) const;
};

// Five equal periods over 1880-2005.
std::vector<double> default_period_breaks();

const char* to_string(Ties t);
const char* to_string(DyadicEffect d);
Ties parse_ties(const std::string& s);
DyadicEffect parse_dyadic(const std::string& s);

}  // namespace rem
