#include "rem/types.hpp"

#include "rem/errors.hpp"

namespace rem {

NodeIndex::NodeIndex(std::vector<std::string> names) {
  for (auto& n : names) {
    if (find(n) >= 0) throw InputError("duplicate node name '" + n + "'");
    intern(n);
  }
}

std::int32_t NodeIndex::intern(std::string_view name) {
  std::string key(name);
  if (auto it = lookup_.find(key); it != lookup_.end()) return it->second;
  auto id = static_cast<std::int32_t>(names_.size());
  names_.push_back(key);
  lookup_.emplace(std::move(key), id);
  return id;
}

std::int32_t NodeIndex::find(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  return it == lookup_.end() ? -1 : it->second;
}

}  // namespace rem
