#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "levolve/errors.hpp"
#include "levolve/experiment.hpp"
#include "levolve/geometry.hpp"

namespace {

constexpr int kConfigError = 2;

void list_flows() {
  std::cout << "static_flat_circle   n=1  g = (l/2pi)^2 dtheta^2, S = 0          keys: circumference\n"
               "static_round_sphere  n=2  g = r0^2 g_unit, S = 0                  keys: r0\n"
               "ricci_round_sphere   n=2  g = (r0^2 + 2 tau) g_unit, S = Ric      keys: r0\n"
               "dilaton_circle       n=1  g = (phi0^2 - 2 alpha c^2 tau) dtheta^2  keys: phi0_squared, alpha, c\n"
               "custom_tabulated     n=1  g, S from a table file                 keys: table\n";
  std::cout << "\nmonitor kinds:";
  for (std::string_view k : levolve::monitor_kinds()) std::cout << ' ' << k;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal transport and monotone quantities on evolving manifolds"};
  app.set_version_flag("--version", std::string(levolve::tool_version()));
  app.require_subcommand(1);

  std::string run_config, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> resolution;
  CLI::App* run = app.add_subcommand("run", "Run every monitor in a config");
  run->add_option("config", run_config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out-dir", out_dir, "Output directory (overrides [output] directory)");
  run->add_option("--seed", seed, "Seed for multistart perturbations and random pairs");
  run->add_option("--resolution", resolution, "Mesh node count N");

  std::string validate_path;
  CLI::App* validate = app.add_subcommand("validate", "Parse and check a config");
  validate->add_option("config", validate_path, "Config file")->required();

  CLI::App* flows = app.add_subcommand("list-flows", "List built-in flow models");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*flows) {
      list_flows();
      return 0;
    }
    if (*validate) {
      const levolve::ExperimentConfig cfg = levolve::validate_config(validate_path);
      std::cout << fmt::format("{}: ok ({} nodes, {} measures, {} monitors)\n", validate_path,
                               cfg.geometry.nodes, cfg.measures.size(), cfg.monitors.size());
      return 0;
    }
    levolve::ExperimentConfig cfg;
    levolve::RunOptions options;
    try {
      cfg = levolve::validate_config(run_config);
      if (!out_dir.empty()) options.out_dir = out_dir;
      options.seed = seed;
      options.resolution = resolution;
      cfg = levolve::apply_overrides(cfg, options);
    } catch (const levolve::ParseError& e) {
      std::cerr << "parse error: " << e.what() << '\n';
      return kConfigError;
    } catch (const levolve::SemanticError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kConfigError;
    }
    const levolve::RunReport report = levolve::run_experiment(cfg, options);
    std::cout << levolve::format_report(report);
    return levolve::exit_code(report);
  } catch (const levolve::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const levolve::SemanticError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const levolve::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
