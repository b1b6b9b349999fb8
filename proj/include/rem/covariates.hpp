#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rem/event_core.hpp"
#include "rem/model_spec.hpp"
#include "rem/panels.hpp"

namespace rem {

// Per-region history statistics need to know which species count as "top".
struct SnapshotOptions {
  double decay = 0.95;
  LastInvaderRule last_invader = LastInvaderRule::skip;
  std::vector<std::int32_t> top_rank;  // per species, -1 when not in the top list
  bool inclusive = false;              // state at t+ instead of t-
};

// Process state at a time point: occupied regions per species, the last
// top-list invader and decayed prior-invasion count per region.
class ProcessSnapshot {
 public:
  ProcessSnapshot(double time, const OccupancyState& occ, History history, const SnapshotOptions& opts);

  double time() const { return time_; }
  int year() const;
  const OccupancyState& occupancy() const { return *occ_; }
  const History& history() const { return history_; }
  bool occupied(SpeciesId s, RegionId c) const;

  std::span<const RegionId> occupied_regions(SpeciesId s) const;
  // Occupied regions that were reached by invasion rather than native range.
  std::span<const RegionId> invaded_regions(SpeciesId s) const;
  std::optional<SpeciesId> last_invader(RegionId c) const;
  double prior_invasions(RegionId c) const { return prior_[static_cast<std::size_t>(c.value)]; }
  std::int32_t top_rank(SpeciesId s) const;

 private:
  double time_;
  const OccupancyState* occ_;
  History history_;
  bool inclusive_;
  std::vector<std::int32_t> top_rank_;
  std::vector<std::size_t> occupied_offsets_;
  std::vector<RegionId> occupied_flat_;
  std::vector<std::size_t> invaded_offsets_;
  std::vector<RegionId> invaded_flat_;
  std::vector<std::int32_t> last_invader_;
  std::vector<double> prior_;
};

// ---- individual statistics -------------------------------------------------

// Minimum distance (km) from c to any region in `sources`; throws when empty.
double min_distance(std::span<const RegionId> sources, RegionId c, const CovariatePanels& panels);
double min_distance(SpeciesId s, RegionId c, double t, const OccupancyState& occ, const CovariatePanels& panels);

// log(1 + sum of bilateral trade between c and each source region other than c).
double trade_sum_log(std::span<const RegionId> sources, RegionId c, int year, const CovariatePanels& panels);
double trade_sum_log(SpeciesId s, RegionId c, double t, const OccupancyState& occ, const CovariatePanels& panels);

// Minimum |temp(r) - temp(c)| over source regions r.
double temp_diff_min(std::span<const RegionId> sources, RegionId c, int year, const CovariatePanels& panels);
double temp_diff_min(SpeciesId s, RegionId c, double t, const OccupancyState& occ, const CovariatePanels& panels);

struct LandCover {
  double agri = 0.0;
  double urban = 0.0;
};
// Throws InputError when cropland + pasture + urban exceeds 1.
LandCover land_cover(RegionId c, int year, const CovariatePanels& panels);

// 1 when c belongs to an empire in which s occupies another region.
double colonial_indicator(std::span<const RegionId> sources, RegionId c, const CovariatePanels& panels);
double colonial_indicator(SpeciesId s, RegionId c, double t, const OccupancyState& occ, const CovariatePanels& panels);

// Sum over earlier invasions of c of decay^(t - t_sc).
double prior_invasions_weighted(RegionId c, double t, const History& history, double decay = 0.95);

// Most recent invader of c before t among the top list (rank >= 0).
std::optional<SpeciesId> last_invader(RegionId c, double t, const History& history,
                                      std::span<const std::int32_t> top_rank,
                                      LastInvaderRule rule = LastInvaderRule::skip);

// ---- covariate sources -----------------------------------------------------

// Produces raw (unexpanded) covariate columns for a set of dyads at a snapshot.
class CovariateSource {
 public:
  virtual ~CovariateSource() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::string name(std::size_t j) const = 0;
  virtual std::string unit(std::size_t j) const { (void)j; return ""; }
  // `out` is dyads.size() x dimension().
  virtual void evaluate(const ProcessSnapshot& snap, std::span<const Dyad> dyads,
                        Eigen::Ref<Eigen::MatrixXd> out) const = 0;
};

// The invasion statistics computed from panels and process history. Known
// names: distance, trade, temp_diff, agri, urban, colonial, prior_invasions,
// sampling_effort.
class PanelCovariates final : public CovariateSource {
 public:
  PanelCovariates(const CovariatePanels& panels, std::vector<std::string> names, const ModelSpec& spec);

  std::size_t dimension() const override { return kinds_.size(); }
  std::string name(std::size_t j) const override;
  std::string unit(std::size_t j) const override;
  void evaluate(const ProcessSnapshot& snap, std::span<const Dyad> dyads,
                Eigen::Ref<Eigen::MatrixXd> out) const override;

  static bool known(const std::string& name);

 private:
  enum class Kind { distance, trade, temp_diff, agri, urban, colonial, prior_invasions, sampling_effort };
  static Kind parse(const std::string& name);

  const CovariatePanels* panels_;
  std::vector<Kind> kinds_;
  SourceRegions source_regions_;
  double distance_unit_km_;
  bool log_sampling_effort_;
};

// Time-invariant dyadic features: value(s, c, j).
class StaticDyadCovariates final : public CovariateSource {
 public:
  StaticDyadCovariates(std::size_t n_species, std::size_t n_regions, std::vector<std::string> names);

  std::size_t dimension() const override { return names_.size(); }
  std::string name(std::size_t j) const override { return names_.at(j); }
  void evaluate(const ProcessSnapshot& snap, std::span<const Dyad> dyads,
                Eigen::Ref<Eigen::MatrixXd> out) const override;

  double& at(SpeciesId s, RegionId c, std::size_t j);
  double at(SpeciesId s, RegionId c, std::size_t j) const;

 private:
  std::size_t n_regions_;
  std::vector<std::string> names_;
  std::vector<double> values_;
};

// ---- design assembly -------------------------------------------------------

struct ColumnInfo {
  std::string name;   // e.g. "distance[1880-1905]"
  std::string base;   // covariate name
  std::string unit;
  int period = -1;    // -1 for a constant effect
  double period_begin = 0.0;
  double period_end = 0.0;
};

struct RandomFamily {
  std::string name;  // species | region | dyadic_ordered | dyadic_symmetric
  std::vector<std::string> labels;
  std::size_t size() const { return labels.size(); }
};

struct DesignRow {
  Dyad dyad;
  double time = 0.0;
  Eigen::VectorXd fixed;
  std::int32_t species_group = -1;
  std::int32_t region_group = -1;
  std::int32_t dyadic_group = -1;  // -1 when absent
};

// All risk-set rows sharing one event time.
struct EventBlock {
  double time = 0.0;
  std::vector<Dyad> dyads;
  Eigen::MatrixXd x;                               // rows x columns
  std::vector<std::vector<std::int32_t>> groups;   // [family][row], -1 when absent
  std::vector<std::int32_t> event_rows;
};

// Group index of the dyadic effect for (last invader rank, candidate rank).
std::int32_t dyadic_group_index(std::int32_t last_rank, std::int32_t candidate_rank, DyadicEffect kind,
                                std::size_t k);
std::size_t dyadic_group_count(DyadicEffect kind, std::size_t k);

// Turns raw source columns into design columns: period expansion for
// piecewise effects and random-effect group indices.
class DesignAssembler {
 public:
  DesignAssembler(const CovariateSource& source, const ModelSpec& spec, const NodeIndex& species,
                  const NodeIndex& regions, std::vector<SpeciesId> top_species);

  const std::vector<ColumnInfo>& columns() const { return columns_; }
  const std::vector<RandomFamily>& families() const { return families_; }
  SnapshotOptions snapshot_options(bool inclusive = false) const;

  void assemble(const ProcessSnapshot& snap, std::span<const Dyad> dyads, EventBlock& out) const;
  DesignRow row(const ProcessSnapshot& snap, Dyad dyad) const;

 private:
  const CovariateSource* source_;
  ModelSpec spec_;
  std::vector<std::size_t> source_column_;  // per declared covariate
  std::vector<ColumnInfo> columns_;
  std::vector<RandomFamily> families_;
  std::vector<std::int32_t> top_rank_;
  std::size_t top_k_ = 0;
  int species_family_ = -1;
  int region_family_ = -1;
  int dyadic_family_ = -1;
};

DesignRow assemble_design_row(Dyad dyad, double t, const OccupancyState& occ, const History& history,
                              const CovariatePanels& panels, const ModelSpec& spec, const NodeIndex& species,
                              std::vector<SpeciesId> top_species = {});

// ---- datasets --------------------------------------------------------------

// The estimation dataset: one block per distinct event time.
class Design {
 public:
  virtual ~Design() = default;
  virtual std::size_t block_count() const = 0;
  // May return `scratch` (lazy designs) or internal storage.
  virtual const EventBlock& block(std::size_t k, EventBlock& scratch) const = 0;

  const std::vector<ColumnInfo>& columns() const { return columns_; }
  const std::vector<RandomFamily>& families() const { return families_; }
  std::size_t column_count() const { return columns_.size(); }
  std::size_t event_count() const { return n_events_; }
  const Window& window() const { return window_; }

 protected:
  std::vector<ColumnInfo> columns_;
  std::vector<RandomFamily> families_;
  std::size_t n_events_ = 0;
  Window window_;
};

class MaterializedDesign final : public Design {
 public:
  MaterializedDesign(std::vector<EventBlock> blocks, std::vector<ColumnInfo> columns,
                     std::vector<RandomFamily> families, Window window);
  explicit MaterializedDesign(const Design& source);

  std::size_t block_count() const override { return blocks_.size(); }
  const EventBlock& block(std::size_t k, EventBlock&) const override { return blocks_[k]; }
  const std::vector<EventBlock>& blocks() const { return blocks_; }

 private:
  std::vector<EventBlock> blocks_;
};

// Builds blocks on demand from the event sequence and a covariate source.
class RemDesign final : public Design {
 public:
  RemDesign(const EventSequence& seq, const OccupancyState& occ, const CovariateSource& source,
            const ModelSpec& spec);

  std::size_t block_count() const override { return times_.size(); }
  const EventBlock& block(std::size_t k, EventBlock& scratch) const override;

  std::size_t total_rows() const { return total_rows_; }
  const DesignAssembler& assembler() const { return assembler_; }
  const std::vector<SpeciesId>& top_species() const { return top_; }

 private:
  const EventSequence* seq_;
  const OccupancyState* occ_;
  std::vector<SpeciesId> top_;
  DesignAssembler assembler_;
  std::vector<double> times_;
  std::vector<std::pair<std::size_t, std::size_t>> groups_;
  std::size_t total_rows_ = 0;
};

// Keeps every block in memory when the design holds at most `max_values`
// covariate values; otherwise returns nullptr.
std::unique_ptr<MaterializedDesign> materialize_if_small(const RemDesign& design, std::size_t max_values);

}  // namespace rem
