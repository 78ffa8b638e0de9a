#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "abrw/lattice.hpp"

namespace abrw {

// Two-species particle state. eta is the signed occupation (plus count minus
// minus count); the multisets list one site per particle. A site never hosts
// both species, so eta encodes the state exactly.
struct Configuration {
  Eigen::VectorXi eta;
  std::vector<std::int32_t> plus_sites;
  std::vector<std::int32_t> minus_sites;

  std::int64_t n_per_species() const {
    return static_cast<std::int64_t>(plus_sites.size());
  }
  // full consistency check: eta matches the multisets, no mixed site,
  // equal species counts
  bool consistent() const;
};

// empirical signed density u = eta / (N eps^d)
struct DensityField {
  Eigen::VectorXd u;
  double eps = 0.0;
  int dim = 2;
};

DensityField density_from(const Configuration& cfg, const Lattice& lat);

// eps^d sum |u|; equals 2 exactly (in integers) for a valid Configuration
double total_variation(const DensityField& rho);

// Place N particles per species by largest-remainder rounding of the positive
// and negative parts of `density`. Quota ties break toward the lower site
// index. Throws std::invalid_argument when either sign part vanishes.
Configuration init_from_density(const Eigen::VectorXd& density, std::int64_t N,
                                const Lattice& lat);

}  // namespace abrw
