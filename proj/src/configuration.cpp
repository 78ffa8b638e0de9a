#include "abrw/configuration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace abrw {

bool Configuration::consistent() const {
  if (plus_sites.size() != minus_sites.size()) return false;
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(eta.size());
  for (int s : plus_sites) {
    if (s < 0 || s >= eta.size()) return false;
    counts[s] += 1;
  }
  for (int s : minus_sites) {
    if (s < 0 || s >= eta.size()) return false;
    counts[s] -= 1;
  }
  for (int i = 0; i < eta.size(); ++i)
    if (counts[i] != eta[i]) return false;
  // no mixed sites: every plus site must be positive, every minus negative
  for (int s : plus_sites)
    if (eta[s] <= 0) return false;
  for (int s : minus_sites)
    if (eta[s] >= 0) return false;
  return true;
}

DensityField density_from(const Configuration& cfg, const Lattice& lat) {
  DensityField rho;
  rho.eps = lat.eps;
  rho.dim = lat.dim;
  const double N = static_cast<double>(cfg.n_per_species());
  const double cell = std::pow(lat.eps, lat.dim);
  rho.u = cfg.eta.cast<double>() / (N * cell);
  return rho;
}

double total_variation(const DensityField& rho) {
  return std::pow(rho.eps, rho.dim) * rho.u.cwiseAbs().sum();
}

namespace {

// Hamilton apportionment of N items proportional to nonnegative weights.
std::vector<std::int64_t> largest_remainder(const Eigen::VectorXd& w,
                                            std::int64_t N) {
  const double total = w.sum();
  const int n = static_cast<int>(w.size());
  std::vector<std::int64_t> out(n, 0);
  std::vector<std::pair<double, int>> rem;
  rem.reserve(n);
  std::int64_t assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double quota = static_cast<double>(N) * w[i] / total;
    const double base = std::floor(quota);
    out[i] = static_cast<std::int64_t>(base);
    assigned += out[i];
    rem.push_back({quota - base, i});
  }
  // larger remainder first; ties toward the lower site index
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::int64_t k = 0; k < N - assigned; ++k) out[rem[k].second] += 1;
  return out;
}

}  // namespace

Configuration init_from_density(const Eigen::VectorXd& density, std::int64_t N,
                                const Lattice& lat) {
  if (density.size() != lat.n_sites())
    throw std::invalid_argument("init_from_density: density size mismatch");
  if (N <= 0) throw std::invalid_argument("init_from_density: N must be positive");
  Eigen::VectorXd pos = density.cwiseMax(0.0);
  Eigen::VectorXd neg = (-density).cwiseMax(0.0);
  if (pos.sum() <= 0.0)
    throw std::invalid_argument("init_from_density: positive part vanishes");
  if (neg.sum() <= 0.0)
    throw std::invalid_argument("init_from_density: negative part vanishes");

  const auto np = largest_remainder(pos, N);
  const auto nm = largest_remainder(neg, N);
  Configuration cfg;
  cfg.eta = Eigen::VectorXi::Zero(lat.n_sites());
  cfg.plus_sites.reserve(N);
  cfg.minus_sites.reserve(N);
  for (int i = 0; i < lat.n_sites(); ++i) {
    if (np[i] > 0 && nm[i] > 0)
      throw std::logic_error("init_from_density: site received both species");
    cfg.eta[i] = static_cast<int>(np[i] - nm[i]);
    for (std::int64_t k = 0; k < np[i]; ++k) cfg.plus_sites.push_back(i);
    for (std::int64_t k = 0; k < nm[i]; ++k) cfg.minus_sites.push_back(i);
  }
  return cfg;
}

}  // namespace abrw
