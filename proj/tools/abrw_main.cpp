// Command-line front end for the annihilating-branching reflected-walk
// toolkit. Exit codes: 0 success, 1 runtime or verification failure,
// 2 configuration error, 3 event/series budget exceeded.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "abrw/errors.hpp"
#include "abrw/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "two-species annihilating-branching random walk: lattice construction, "
      "spectral toolkit, event-driven simulation, and heat-flow comparison"};
  app.require_subcommand(1);

  std::string config_path;
  abrw::CliOverrides ov;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> budget;
  std::optional<int> replicas;

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path,
                                "INI configuration, or a manifest.json for an "
                                "exact rerun (simulate only)");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--seed", seed, "base RNG seed (overrides config)");
    sub->add_option("--budget-events", budget,
                    "refuse runs projected to exceed this many events");
    sub->add_option("--replicas", replicas,
                    "replica count for sweeps (overrides config)");
  };

  CLI::App* c_lattice =
      app.add_subcommand("lattice", "build a lattice and verify jump constraints");
  add_common(c_lattice, true);
  CLI::App* c_eig =
      app.add_subcommand("eig", "compute the low spectrum of the site laplacian");
  add_common(c_eig, true);
  CLI::App* c_sim = app.add_subcommand(
      "simulate", "run the particle system and record observables");
  add_common(c_sim, true);
  CLI::App* c_evolve = app.add_subcommand(
      "evolve", "deterministic heat evolution of the initial density");
  add_common(c_evolve, true);
  CLI::App* c_compare = app.add_subcommand(
      "compare", "simulate and compare against the normalized heat reference");
  add_common(c_compare, true);
  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "replicated runs across population sizes, in parallel");
  add_common(c_sweep, true);
  app.add_subcommand("selftest", "fast built-in checks (< 60 s)");

  CLI11_PARSE(app, argc, argv);

  ov.out_dir = out_dir;
  ov.seed = seed;
  ov.budget_events = budget;
  ov.replicas = replicas;

  try {
    if (app.got_subcommand("selftest")) return abrw::cmd_selftest();

    abrw::LoadedConfig loaded = abrw::load_config_or_manifest(config_path);
    abrw::apply_overrides(loaded.cfg, ov);

    if (app.got_subcommand(c_lattice)) return abrw::cmd_lattice(loaded.cfg);
    if (app.got_subcommand(c_eig)) return abrw::cmd_eig(loaded.cfg);
    if (app.got_subcommand(c_sim))
      return abrw::cmd_simulate(loaded.cfg,
                                loaded.from_manifest ? &loaded : nullptr);
    if (app.got_subcommand(c_evolve)) return abrw::cmd_evolve(loaded.cfg);
    if (app.got_subcommand(c_compare)) return abrw::cmd_compare(loaded.cfg);
    if (app.got_subcommand(c_sweep)) return abrw::cmd_sweep(loaded.cfg);
  } catch (const abrw::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return abrw::exit_config;
  } catch (const abrw::BudgetError& e) {
    std::fprintf(stderr, "budget exceeded: %s\n", e.what());
    return abrw::exit_budget;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return abrw::exit_failure;
  }
  return abrw::exit_failure;
}
