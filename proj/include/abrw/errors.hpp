#pragma once

#include <stdexcept>
#include <string>

namespace abrw {

// construction / geometry failures (empty or disconnected lattice, infeasible
// boundary sites, malformed files)
struct LatticeError : std::runtime_error {
  explicit LatticeError(const std::string& what) : std::runtime_error(what) {}
};

// config-file problems: unknown keys, missing keys, malformed values
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// work estimate exceeds the configured cap (event counts, series terms)
struct BudgetError : std::runtime_error {
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace abrw
