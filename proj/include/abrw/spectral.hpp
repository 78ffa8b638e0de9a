#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

#include "abrw/configuration.hpp"
#include "abrw/lattice.hpp"
#include "abrw/operators.hpp"

namespace abrw {

// Eigenpairs of the site laplacian, stored as decay rates: L phi_n = -lambda_n
// phi_n with lambda_0 <= lambda_1 <= ... ascending, lambda_0 = 0 with a
// constant positive phi_0 (up to solver tolerance). Modes are normalized to
// eps^d sum phi^2 = 1; exactly degenerate clusters are orthonormalized in that
// inner product; the largest-magnitude entry of each mode is positive.
struct SpectralBasis {
  enum class Origin { numeric, closed_form_rectangle };
  Origin origin = Origin::numeric;
  double eps = 0.0;
  int dim = 2;
  Eigen::VectorXd lambda;  // k entries, ascending
  Eigen::MatrixXd modes;   // n_sites x k
  Eigen::VectorXd residual;  // max-norm eigen residuals; for closed-form
                             // origin these measure the sampled continuum
                             // modes against the lattice operator and stay
                             // order one (boundary rows dominate)

  int k() const { return static_cast<int>(lambda.size()); }
};

// Smallest-|lambda| eigenpairs by shift-inverted restarted Arnoldi iteration;
// residual tolerance applies to ||L phi + lambda phi||_inf. Throws when the
// iteration fails to converge.
SpectralBasis eig_neumann(const Lattice& lat, int k, double tol = 1e-8);

// Product-cosine modes of the rectangle sampled on the lattice. The decay
// rates carry the walk normalization: the holding time makes the summed
// squared-increment rate 1, so the site laplacian tends to (2d)^-1 times the
// classical one and mode m has lambda = pi^2 sum_i (m_i/a_i)^2 / (2d).
SpectralBasis closed_form_basis(const DomainSpec& rect, const Lattice& lat, int k);

// e^{t L} by uniformization: P = I + L / Lambda has nonnegative entries for
// Lambda >= max |diag|, and the Poisson-weighted power series is truncated to
// tail mass <= tail_tol. Works for either operator tag; mass conservation
// (adjoint) or constant preservation (laplacian) follows from the tag.
class HeatEvolver {
 public:
  HeatEvolver(const LinearOperator& op, double tail_tol = 1e-12,
              std::int64_t max_terms = 10'000'000);

  Eigen::VectorXd evolve(const Eigen::VectorXd& rho, double t) const;

 private:
  const LinearOperator& op_;
  double lambda_unif_;
  double tail_tol_;
  std::int64_t max_terms_;
};

Eigen::VectorXd evolve_heat(const LinearOperator& op, const Eigen::VectorXd& rho,
                            double t, double tail_tol = 1e-12);

// scale rho to total variation 2 (eps^d sum |rho| = 2); zero stays zero
Eigen::VectorXd normalize_tv(const Eigen::VectorXd& rho, double eps, int dim);

// C(t) = 2 / TV(e^{tL*} rho0) for TV(rho0) = 2; throws on TV underflow
double normalizer_C(const HeatEvolver& fwd, const Eigen::VectorXd& rho0,
                    double t, double eps, int dim);

// plain text: k, n, eps, d header; lambda line; one row of k mode values per
// site; 17 significant digits
void export_basis(const SpectralBasis& b, std::ostream& out);
SpectralBasis import_basis(std::istream& in);
void export_basis_file(const SpectralBasis& b, const std::string& path);

}  // namespace abrw
