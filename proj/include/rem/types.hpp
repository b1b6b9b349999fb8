#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rem {

// Index of a species (sender) inside a NodeIndex.
struct SpeciesId {
  std::int32_t value = -1;
  friend auto operator<=>(const SpeciesId&, const SpeciesId&) = default;
};

// Index of a region (receiver) inside a NodeIndex.
struct RegionId {
  std::int32_t value = -1;
  friend auto operator<=>(const RegionId&, const RegionId&) = default;
};

struct Dyad {
  SpeciesId species;
  RegionId region;
  friend auto operator<=>(const Dyad&, const Dyad&) = default;
};

// Closed observation window [begin, end], in years.
struct Window {
  double begin = 0.0;
  double end = 0.0;

  bool contains(double t) const { return t >= begin && t <= end; }
};

// Bidirectional name <-> dense index table.
class NodeIndex {
 public:
  NodeIndex() = default;
  explicit NodeIndex(std::vector<std::string> names);

  // Returns the existing index or appends a new node.
  std::int32_t intern(std::string_view name);
  // -1 when absent.
  std::int32_t find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) >= 0; }

  const std::string& name(std::int32_t i) const { return names_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> lookup_;
};

}  // namespace rem
