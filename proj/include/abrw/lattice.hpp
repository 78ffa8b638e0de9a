#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "abrw/domain.hpp"

namespace abrw {

// Nearest-neighbor lattice approximation of a domain: sites are the points of
// eps * Z^d inside the domain, pruned until every site keeps at least dim
// neighbors. Sites are ordered lexicographically by integer coordinates;
// neighbor lists are ordered by ascending site index.
struct Lattice {
  int dim = 2;
  double eps = 0.0;
  std::vector<Eigen::Vector3i> coords;  // integer coordinates; position = eps * coords
  std::vector<std::vector<std::int32_t>> neighbors;
  std::vector<std::vector<double>> jump_prob;  // aligned with neighbors, sums to 1
  Eigen::VectorXd holding;                     // h(x) = sum_y p_xy |y - x|^2
  std::vector<std::uint8_t> boundary;          // 1 iff fewer than 2*dim neighbors
  std::vector<Eigen::Vector3d> inward_normal;  // unit, boundary sites only
  Eigen::VectorXd c1;                          // drift magnitude at boundary sites
  int pruned_sites = 0;
  bool has_normals = true;  // false for lattices read back from file

  int n_sites() const { return static_cast<int>(coords.size()); }
  Eigen::Vector3d position(int i) const { return eps * coords[i].cast<double>(); }
  int neighbor_count(int i) const { return static_cast<int>(neighbors[i].size()); }
};

// Build the pruned lattice. Throws LatticeError if no site survives pruning,
// or if the surviving graph is disconnected, or if a boundary site admits no
// nonnegative jump distribution with strictly inward mean drift.
Lattice build_lattice(const DomainSpec& dom, double eps);

// Jump probabilities for one boundary site: p >= 0, sum p = 1, and
// sum_j p_j d_j = c1 * n with c1 > 0, where d_j are the unit jump directions.
// Among feasible solutions returns the one maximizing min_j p_j; residual
// ties are resolved by re-maximizing each p_j in lexicographic direction
// order. Throws LatticeError when infeasible.
Eigen::VectorXd solve_boundary_jumps(const std::vector<Eigen::Vector3d>& directions,
                                     const Eigen::Vector3d& inward_normal, int dim);

// convenience overload working on a built lattice site
Eigen::VectorXd solve_boundary_jumps(const Lattice& lat, int site,
                                     const Eigen::Vector3d& inward_normal);

// h(x) = sum_y p_xy |y - x|^2 from the stored neighbor geometry
double compute_holding_time(const Lattice& lat, int site);

// Constraint diagnostics: probability row sums, tangential drift residuals
// (in units of eps), and the minimum inward drift coefficient.
struct LatticeCheckReport {
  double max_prob_row_residual = 0.0;   // max_x |sum_y p_xy - 1|
  double max_tangential_residual = 0.0; // max over boundary sites, |.| of sum p (y-x) minus its normal part
  double min_c1 = 0.0;                  // min over boundary sites of drift . normal (units of eps)
  int worst_site = -1;                  // site attaining the tangential max
  int bad_row_site = -1;                // first site with row-sum residual > 1e-12
};
LatticeCheckReport check_jump_constraints(const Lattice& lat);

// Plain-text export/import. The header carries d, eps and the site count;
// each site line carries index, integer coordinates, boundary flag and h;
// each edge line carries x, y, p_xy. All reals use 17 significant digits so
// export -> import -> export is byte-identical. Normals are not part of the
// format; imported lattices have has_normals = false.
void export_lattice(const Lattice& lat, std::ostream& out);
Lattice import_lattice(std::istream& in);
void export_lattice_file(const Lattice& lat, const std::string& path);
Lattice import_lattice_file(const std::string& path);

}  // namespace abrw
