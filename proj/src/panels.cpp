#include "rem/panels.hpp"

#include <string>

#include "rem/errors.hpp"

namespace rem {

int CovariatePanels::year_index(int year, const char* panel) const {
  if (year < first_year || year > last_year) {
    throw InputError(std::string("panel '") + panel + "' has no data for year " + std::to_string(year));
  }
  return year - first_year;
}

double CovariatePanels::trade_flow(RegionId a, RegionId b, int year) const {
  const auto& m = imports[static_cast<std::size_t>(year_index(year, "trade"))];
  return m(a.value, b.value) + m(b.value, a.value);
}

}  // namespace rem
