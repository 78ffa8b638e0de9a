#pragma once

// Command implementations behind the CLI: lattice construction and checking,
// eigenbasis computation, stochastic simulation (with manifest-driven exact
// reruns), deterministic heat evolution, simulation-vs-limit comparison,
// multi-population sweeps, and a quick self-test.

#include <cstdint>
#include <optional>
#include <string>

#include "abrw/config.hpp"
#include "abrw/manifest.hpp"

namespace abrw {

// Exit codes shared by every command.
inline constexpr int exit_ok = 0;       // success
inline constexpr int exit_failure = 1;  // runtime or verification failure
inline constexpr int exit_config = 2;   // configuration rejected
inline constexpr int exit_budget = 3;   // event/series budget exceeded

struct CliOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> budget_events;
  std::optional<int> replicas;
};

// Reads an INI configuration, or a manifest (JSON) whose embedded
// configuration is extracted; from_manifest marks the rerun path.
struct LoadedConfig {
  Config cfg;
  bool from_manifest = false;
  RunManifest manifest;
};
LoadedConfig load_config_or_manifest(const std::string& path);

void apply_overrides(Config& cfg, const CliOverrides& ov);

int cmd_lattice(const Config& cfg);
int cmd_eig(const Config& cfg);
int cmd_simulate(const Config& cfg, const LoadedConfig* rerun);
int cmd_evolve(const Config& cfg);
int cmd_compare(const Config& cfg);
int cmd_sweep(const Config& cfg);
int cmd_selftest();

}  // namespace abrw
