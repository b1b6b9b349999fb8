#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rem/model_spec.hpp"
#include "rem/types.hpp"

namespace rem {

// Settings for `simulate`: a synthetic world plus the generating model, which
// reuses the [model] section (covariates must be named x1, x2, ...).
struct SimulationConfig {
  std::size_t species = 50;
  std::size_t regions = 40;
  std::size_t natives = 1;
  std::vector<double> beta;
  std::vector<double> baseline_breaks{0.0};
  std::vector<double> baseline_rates{1e-3};
  Window window{0.0, 1e4};
  std::size_t max_events = 2000;
  double species_sd = 0.0;
  double region_sd = 0.0;
  double dyadic_sd = 0.0;
  std::uint64_t world_seed = 1;
  bool annual = false;
};

// One INI-style file drives every command. Relative paths are resolved
// against the directory holding the file.
struct RunConfig {
  std::filesystem::path file;

  // [data]
  std::optional<std::filesystem::path> first_records, natives, regions, distance, aliases, trade, temperature,
      landcover, empires, dyad_covariates;
  std::string taxon = "all";
  Window window{1880.0, 2005.0};

  // [model]
  ModelSpec model;
  bool both_dyadic = false;  // dyadic = both: fit ordered and symmetric

  // [fit]
  int max_iterations = 100;
  double sigma_lower = 1e-4;
  double sigma_upper = 10.0;

  // [per_unit]: hazard-ratio unit changes by column or covariate name
  std::map<std::string, double> per_unit;

  // [run]
  std::filesystem::path output = "out";
  int jobs = 1;
  std::uint64_t seed = 1;

  // [simulate]
  SimulationConfig sim;
};

RunConfig load_config(const std::filesystem::path& file);
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

// Every setting in force, defaults included, in the same format load_config
// reads; paths are absolute so the text stands on its own.
std::string canonical_config(const RunConfig& cfg);

// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace rem
