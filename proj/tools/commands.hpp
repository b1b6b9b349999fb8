#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rem/config.hpp"

namespace remcli {

struct CommandOptions {
  std::optional<int> jobs;                     // overrides [run] jobs
  std::optional<std::uint64_t> seed;           // overrides [run] seed
  std::optional<std::filesystem::path> fit_dir;  // diagnose: which fit to read
  std::string transform = "rank";               // diagnose: time transform
};

// Each command writes under the configured output directory and reports
// progress on `log`. Errors are thrown (rem::InputError / rem::NumericalError).
void cmd_prepare(const rem::RunConfig& cfg, const CommandOptions& opts, std::ostream& log);
void cmd_fit(const rem::RunConfig& cfg, const CommandOptions& opts, std::ostream& log);
void cmd_diagnose(const rem::RunConfig& cfg, const CommandOptions& opts, std::ostream& log);
void cmd_simulate(const rem::RunConfig& cfg, const CommandOptions& opts, std::ostream& log);

}  // namespace remcli
