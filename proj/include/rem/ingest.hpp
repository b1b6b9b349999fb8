#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rem/event_core.hpp"
#include "rem/panels.hpp"

namespace rem {

// A delimited text table with a header row. Rows are 1-based in messages
// (counting the header as row 1), matching what a spreadsheet shows.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws InputError
  std::string where(std::size_t row) const;         // "path:line"
};

CsvTable read_csv(const std::filesystem::path& path, std::initializer_list<std::string_view> required = {});
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
// Shortest text that reads back to the same double.
std::string format_double(double v);

double parse_double(const CsvTable& t, std::size_t row, std::size_t col);
int parse_year(const CsvTable& t, std::size_t row, std::size_t col);

// Harmonized region list plus an optional alias table (alias -> canonical).
class RegionResolver {
 public:
  RegionResolver() = default;
  explicit RegionResolver(NodeIndex regions) : regions_(std::move(regions)) {}

  void add_alias(const std::string& alias, const std::string& canonical);
  std::int32_t find(std::string_view name) const;  // -1 when unknown
  RegionId require(const CsvTable& t, std::size_t row, std::size_t col) const;
  const NodeIndex& regions() const { return regions_; }

 private:
  NodeIndex regions_;
  std::unordered_map<std::string, std::int32_t> aliases_;
};

// Regions are the (sorted) names appearing in the distance table.
RegionResolver load_regions(const std::filesystem::path& distance_csv,
                            const std::optional<std::filesystem::path>& aliases_csv = std::nullopt);

// Records restricted to `taxon` (empty or "all" keeps every row), region
// names rewritten to their canonical form.
std::vector<FirstRecord> load_first_records(const std::filesystem::path& path, const RegionResolver& regions,
                                            std::string_view taxon = {});
// Natives of the given species only (all when `species` is empty).
std::vector<NativeRange> load_natives(const std::filesystem::path& path, const RegionResolver& regions,
                                      std::span<const FirstRecord> species = {});

// ---- imputation ------------------------------------------------------------

// Fills gaps in an annual trade series (index i <-> year first_year + i) from
// a least-squares line through log(value + 1). Leading gaps of a series that
// starts at an observed 0 become 0. Observed values are returned unchanged.
std::vector<double> extrapolate_trade(std::span<const std::optional<double>> series, int first_year,
                                      std::string* warning = nullptr);

// Annual values over [first_year, last_year] from (year, value) anchors:
// linear between anchors, held constant outside them, clamped to [0, 1].
std::vector<double> interpolate_decadal(std::span<const std::pair<int, double>> anchors, int first_year,
                                        int last_year);

// Per region: number of distinct species native there or recorded by `cutoff`.
std::vector<double> compute_sampling_effort(std::span<const FirstRecord> records, std::span<const NativeRange> natives,
                                            const NodeIndex& regions, double cutoff = 1880.0);

// ---- panels ----------------------------------------------------------------

struct PanelPaths {
  std::filesystem::path distance;
  std::optional<std::filesystem::path> trade;
  std::optional<std::filesystem::path> temperature;
  std::optional<std::filesystem::path> landcover;
  std::optional<std::filesystem::path> empires;
};

struct PanelCoverage {
  std::string panel;
  std::size_t cells = 0;
  std::size_t imputed = 0;
  double percent_imputed() const { return cells ? 100.0 * static_cast<double>(imputed) / static_cast<double>(cells) : 0.0; }
};

struct CoverageReport {
  std::vector<PanelCoverage> panels;
  std::vector<std::string> warnings;
};

// Reads, validates and repairs the covariate tables for years
// [first_year, last_year]. Sampling effort is derived from records/natives.
CovariatePanels load_panels(const PanelPaths& paths, const RegionResolver& regions, int first_year, int last_year,
                            std::span<const FirstRecord> records, std::span<const NativeRange> natives,
                            CoverageReport* report = nullptr);

// Writes complete annual tables that load_panels reads back without imputation.
void write_panels(const std::filesystem::path& dir, const CovariatePanels& panels);
void write_first_records(const std::filesystem::path& path, std::span<const FirstRecord> records,
                         std::string_view taxon = "custom");
void write_natives(const std::filesystem::path& path, std::span<const NativeRange> natives);
void write_coverage_report(const std::filesystem::path& path, const CoverageReport& report);

}  // namespace rem
