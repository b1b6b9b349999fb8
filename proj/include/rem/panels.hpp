#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "rem/types.hpp"

namespace rem {

// Exogenous covariate tables over the harmonized region list and an annual
// year range. Panels that a model does not use may be left empty.
struct CovariatePanels {
  NodeIndex regions;
  int first_year = 0;
  int last_year = -1;

  Eigen::MatrixXd distance_km;               // regions x regions, symmetric, zero diagonal
  std::vector<Eigen::MatrixXd> imports;      // per year: imports(importer, exporter) in current USD
  Eigen::MatrixXd temperature;               // regions x years, degrees C
  Eigen::MatrixXd cropland, pasture, urban;  // regions x years, proportions
  std::vector<int> empire;                   // per region, -1 when independent
  std::vector<std::string> empire_names;
  std::vector<double> sampling_effort;       // species recorded by the cutoff year

  std::size_t region_count() const { return regions.size(); }
  int year_count() const { return last_year - first_year + 1; }
  bool has_distance() const { return distance_km.size() > 0; }
  bool has_trade() const { return !imports.empty(); }
  bool has_temperature() const { return temperature.size() > 0; }
  bool has_landcover() const { return cropland.size() > 0; }
  bool has_empires() const { return !empire.empty(); }
  bool has_sampling_effort() const { return !sampling_effort.empty(); }

  // Column of `year` in the annual panels; throws InputError naming `panel`
  // when the year is outside the covered range.
  int year_index(int year, const char* panel) const;
  // Total bilateral flow between two regions in a year (both directions).
  double trade_flow(RegionId a, RegionId b, int year) const;
};

}  // namespace rem
