#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <functional>
#include <iostream>

#include "commands.hpp"

namespace {

using namespace pumpshaper;
using namespace pumpshaper::cli;

// Exit codes: 2 for configuration and input errors, 3 for numerical failures.
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--scenario", opt.scenario, "Scenario YAML file")->check(CLI::ExistingFile);
  sub->add_option("--seed", opt.seed, "Run seed; overrides the scenario");
  sub->add_option("--out", opt.out, "Output directory; overrides the scenario");
  sub->add_flag("--force", opt.force, "Overwrite existing outputs");
}

Scenario scenario_for(const Options& opt) {
  if (!opt.scenario.empty()) return load_scenario(opt.scenario);
  return parse_scenario("{}", "<defaults>");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pump shaping for high-dimensional entangled photon pairs"};
  app.require_subcommand(1);
  Options opt;

  struct Command {
    const char* name;
    const char* help;
    std::function<int(Context&)> run;
  };
  const Command commands[] = {
      {"spectrum", "Spiral spectrum and K_az of a pump", cmd_spectrum},
      {"optimize", "SPSA pump optimization toward a flat subspace", cmd_optimize},
      {"tomo", "Simulated or measured qutrit state tomography", cmd_tomo},
      {"bell", "CGLMP I3 Bell parameter", cmd_bell},
      {"mask", "Pump and detection phase masks", cmd_mask},
      {"pipeline", "Optimize, tomography, Bell test and masks in one run", cmd_pipeline},
  };
  std::function<int(Context&)> selected;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, opt);
    const std::string name = c.name;
    if (name == "spectrum" || name == "optimize" || name == "bell") {
      sub->add_option("--shots", opt.shots, "Counts per measurement, or 'exact'");
    }
    if (name == "tomo") {
      sub->add_option("--counts", opt.counts, "Measured counts (CSV id,counts or JSON lines)")->check(CLI::ExistingFile);
    }
    if (name == "tomo" || name == "bell") {
      sub->add_option("--state", opt.state, "max-ent, spectrum, or a state JSON file");
      sub->add_option("--noise", opt.noise, "White-noise mixing weight p of the pure state");
    }
    if (name == "bell") sub->add_flag("--gamma-scan", opt.gamma_scan, "Maximize I3 over the gamma family");
    if (name == "mask") {
      sub->add_flag("--verify", opt.verify, "Round-trip masks through the diffraction model");
      sub->add_option("--coefficients", opt.coefficients, "JSON with pump coefficients")->check(CLI::ExistingFile);
    }
    sub->callback([&selected, run = c.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    Context ctx(scenario_for(opt), opt);
    return selected(ctx);
  } catch (const YAML::Exception& e) {
    std::cerr << "error: " << opt.scenario.string() << ":" << e.mark.line + 1 << ":" << e.mark.column + 1 << ": " << e.msg << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
