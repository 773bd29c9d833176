#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "lockin/error.hpp"

int main(int argc, char** argv) {
  using namespace lockin::cli;

  CLI::App app{"Lock-in domain estimation for PLL / current-control cascades"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::string preset;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "Run config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides the config)");
  app.add_option("--preset", preset, "Model preset")
      ->check(CLI::IsMember({"version-I", "version-II"}));

  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, std::ostream&, std::ostream&);
  };
  const Cmd cmds[] = {
      {"check", "Check the model assumptions", cmd_check},
      {"estimate", "Build the cycle family, growth bound and domain estimate", cmd_estimate},
      {"validate", "Monte Carlo validation of an estimate", cmd_validate},
      {"simulate", "Simulate one trajectory", cmd_simulate},
      {"export", "Write plot tables from estimate artifacts", cmd_export},
  };
  std::vector<CLI::App*> subs;
  for (const Cmd& c : cmds) subs.push_back(app.add_subcommand(c.name, c.help));

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  try {
    cfg = config_path.empty() ? parse_config(default_config_json()) : load_config(config_path);
    // A preset on the command line replaces the model section wholesale.
    if (!preset.empty()) {
      cfg.plugin.reset();
      cfg.preset = preset;
      cfg.params = lockin::InverterParams::preset(preset);
    }
  } catch (const lockin::Error& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kAssumptions;
  }
  if (seed_opt->count() > 0) cfg.seed = seed;
  if (!out_dir.empty()) cfg.output = out_dir;

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) return cmds[i].fn(cfg, std::cout, std::cerr);
  }
  return kOk;
}
