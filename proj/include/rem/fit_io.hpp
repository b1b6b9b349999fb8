#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "rem/diagnostics.hpp"
#include "rem/estimator.hpp"

namespace rem {

// Fit artifacts, one table per file:
//   coefficients.csv  variance_components.csv  frailties.csv  baseline.csv
//   covariance.csv    hazard_ratios.csv        summary.csv     theta.csv
// Numbers are written in shortest round-trip form, so read_fit restores the
// estimates bit for bit.
void write_fit(const std::filesystem::path& dir, const FitResult& fit,
               const std::map<std::string, double>& per_unit = {});
FitResult read_fit(const std::filesystem::path& dir);

// Frailties of one family, largest first.
std::vector<Frailty> ranked_frailties(const FitResult& fit, const std::string& family);

void write_residuals(const std::filesystem::path& path, const ResidualSet& res, const NodeIndex& species,
                     const NodeIndex& regions);
void write_ph_test(const std::filesystem::path& dir, const PhTestResult& t);
void write_correlations(const std::filesystem::path& path, const CorrelationMatrix& m);

}  // namespace rem
