#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "rem/errors.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"remfit: relational event models of species invasions"};
  app.require_subcommand(1);
  fs::path config;
  remcli::CommandOptions opts;
  int jobs = 0;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (INI)")->required();
    sub->add_option("--jobs", jobs, "worker threads");
  };
  auto* prepare = app.add_subcommand("prepare", "validate inputs and build the covariate cache");
  auto* fit = app.add_subcommand("fit", "fit the model on prepared data");
  auto* diagnose = app.add_subcommand("diagnose", "residuals, proportional-hazards test, correlations");
  auto* sim = app.add_subcommand("simulate", "simulate an invasion sequence from a known model");
  for (auto* s : {prepare, fit, diagnose, sim}) add_common(s);
  diagnose->add_option("--fit", opts.fit_dir, "fit directory (default <output>/fit)");
  diagnose->add_option("--transform", opts.transform, "time transform: rank, identity, log")
      ->check(CLI::IsMember({"rank", "identity", "log"}));
  sim->add_option("--seed", seed, "random seed (overrides [run] seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    for (auto* s : {prepare, fit, diagnose, sim})
      if (s->parsed()) {
        if (s->count("--jobs")) opts.jobs = jobs;
        if (s == sim && s->count("--seed")) opts.seed = seed;
      }
    const auto cfg = rem::load_config(config);
    if (prepare->parsed()) remcli::cmd_prepare(cfg, opts, std::cout);
    if (fit->parsed()) remcli::cmd_fit(cfg, opts, std::cout);
    if (diagnose->parsed()) remcli::cmd_diagnose(cfg, opts, std::cout);
    if (sim->parsed()) remcli::cmd_simulate(cfg, opts, std::cout);
  } catch (const rem::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const rem::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
