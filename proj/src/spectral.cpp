#include "abrw/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "abrw/errors.hpp"
#include "abrw/rng.hpp"
#include "abrw/series.hpp"

namespace abrw {

namespace {

double cell_volume(double eps, int dim) { return std::pow(eps, dim); }

// deterministic sign convention: the entry of largest magnitude is positive
// (lowest index on ties)
void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int arg = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > best * (1.0 + 1e-12)) {
      best = a;
      arg = i;
    }
  }
  if (v[arg] < 0) v = -v;
}

double rel_residual(const Eigen::SparseMatrix<double>& A,
                    const Eigen::VectorXd& phi, double lambda) {
  const Eigen::VectorXd r = A * phi + lambda * phi;
  return r.cwiseAbs().maxCoeff() / phi.cwiseAbs().maxCoeff();
}

}  // namespace

SpectralBasis eig_neumann(const Lattice& lat, int k, double tol) {
  const int n = lat.n_sites();
  if (k < 1 || k > n)
    throw std::invalid_argument("eig_neumann: k out of range");
  const LinearOperator L = discrete_laplacian(lat);
  const Eigen::SparseMatrix<double> A = L.matrix();
  const double vol = cell_volume(lat.eps, lat.dim);

  std::vector<std::pair<double, Eigen::VectorXd>> accepted;

  if (n <= 8) {
    // tiny lattices: dense solve
    const Eigen::MatrixXd dense_a(A);
    Eigen::EigenSolver<Eigen::MatrixXd> es(dense_a);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(es.eigenvalues()[a]) < std::abs(es.eigenvalues()[b]);
    });
    for (int i = 0; i < k; ++i) {
      const int j = order[i];
      accepted.push_back({-es.eigenvalues()[j].real(),
                          es.eigenvectors().col(j).real()});
    }
  } else {
    // shift-inverted Arnoldi with locking; any sigma > 0 keeps the ordering
    // of a nonpositive spectrum under mu -> 1/(mu - sigma)
    double span = 0.0;
    for (int c = 0; c < lat.dim; ++c) {
      int lo = lat.coords[0][c], hi = lat.coords[0][c];
      for (const auto& kc : lat.coords) {
        lo = std::min(lo, kc[c]);
        hi = std::max(hi, kc[c]);
      }
      span = std::max(span, lat.eps * (hi - lo));
    }
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double sigma =
        std::max(1e-8, 0.5 * pi2 / (2.0 * lat.dim * span * span));

    Eigen::SparseMatrix<double> shifted = A;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) -= sigma;
    shifted.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("eig_neumann: factorization failed");

    const int m = std::min(n, std::max(2 * k + 16, 36));
    Eigen::MatrixXd Q(n, k);  // locked directions (orthonormal)
    int locked = 0;

    for (int round = 0; round < 60 && locked < k; ++round) {
      CounterRng rng(0x5eedbe71ull, static_cast<std::uint64_t>(round));
      Eigen::VectorXd v0(n);
      for (int i = 0; i < n; ++i) v0[i] = rng.uniform() - 0.5;
      if (locked > 0)
        v0 -= Q.leftCols(locked) * (Q.leftCols(locked).transpose() * v0);
      v0.normalize();

      Eigen::MatrixXd V(n, m + 1);
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
      V.col(0) = v0;
      int steps = m;
      for (int j = 0; j < m; ++j) {
        Eigen::VectorXd w = lu.solve(V.col(j));
        if (locked > 0)
          w -= Q.leftCols(locked) * (Q.leftCols(locked).transpose() * w);
        for (int pass = 0; pass < 2; ++pass) {
          for (int i = 0; i <= j; ++i) {
            const double hij = V.col(i).dot(w);
            H(i, j) += hij;
            w -= hij * V.col(i);
          }
        }
        const double norm = w.norm();
        H(j + 1, j) = norm;
        if (norm < 1e-12) {
          steps = j + 1;
          break;
        }
        V.col(j + 1) = w / norm;
      }

      Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(steps, steps));
      std::vector<int> order(steps);
      for (int i = 0; i < steps; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        // largest |theta| first: closest eigenvalues to the shift
        return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
      });

      for (int oi = 0; oi < steps && locked < k; ++oi) {
        const auto theta = es.eigenvalues()[order[oi]];
        if (std::abs(theta) < 1e-14) continue;
        Eigen::VectorXcd yc = es.eigenvectors().col(order[oi]);
        for (int part = 0; part < 2 && locked < k; ++part) {
          Eigen::VectorXd y =
              part == 0 ? yc.real().eval() : yc.imag().eval();
          if (y.norm() < 1e-10) continue;
          Eigen::VectorXd x = V.leftCols(steps) * y;
          if (locked > 0)
            x -= Q.leftCols(locked) * (Q.leftCols(locked).transpose() * x);
          const double xn = x.norm();
          if (xn < 1e-8) continue;
          x /= xn;
          const double mu = x.dot(A * x);  // Rayleigh refinement
          if (rel_residual(A, x, -mu) <= tol) {
            accepted.push_back({-mu, x});
            Q.col(locked++) = x;
          }
          if (std::abs(theta.imag()) < 1e-12 * std::abs(theta)) break;
        }
      }
    }
    if (locked < k) {
      std::ostringstream msg;
      msg << "eig_neumann: only " << locked << " of " << k
          << " eigenpairs converged to tolerance " << tol;
      throw std::runtime_error(msg.str());
    }
  }

  std::sort(accepted.begin(), accepted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  accepted.resize(k);

  SpectralBasis basis;
  basis.origin = SpectralBasis::Origin::numeric;
  basis.eps = lat.eps;
  basis.dim = lat.dim;
  basis.lambda.resize(k);
  basis.modes.resize(n, k);
  for (int i = 0; i < k; ++i) {
    basis.lambda[i] = accepted[i].first;
    basis.modes.col(i) = accepted[i].second;
  }

  // orthonormalize exactly degenerate clusters in the eps^d inner product
  int start = 0;
  while (start < k) {
    int end = start + 1;
    while (end < k && std::abs(basis.lambda[end] - basis.lambda[start]) <=
                          std::max(100 * tol, 1e-6 * std::abs(basis.lambda[end])))
      ++end;
    for (int i = start; i < end; ++i) {
      Eigen::VectorXd v = basis.modes.col(i);
      for (int j = start; j < i; ++j)
        v -= basis.modes.col(j).dot(v) /
             basis.modes.col(j).squaredNorm() * basis.modes.col(j);
      basis.modes.col(i) = v;
    }
    start = end;
  }

  // normalize eps^d sum phi^2 = 1 and fix signs; store final residuals
  basis.residual.resize(k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd v = basis.modes.col(i);
    v /= std::sqrt(vol * v.squaredNorm());
    fix_sign(v);
    basis.modes.col(i) = v;
    basis.residual[i] = rel_residual(A, v, basis.lambda[i]);
    if (n > 8 && basis.residual[i] > 10 * tol)
      throw std::runtime_error("eig_neumann: residual grew past tolerance after clustering");
  }
  return basis;
}

SpectralBasis closed_form_basis(const DomainSpec& rect, const Lattice& lat, int k) {
  if (rect.kind != DomainSpec::Kind::rectangle)
    throw std::invalid_argument("closed_form_basis: rectangle domains only");
  if (k < 1) throw std::invalid_argument("closed_form_basis: k must be positive");
  const int dim = rect.dim;
  const double pi = std::numbers::pi;
  // the walk clock makes the summed squared-increment rate 1, so the site
  // laplacian converges to (2 dim)^-1 times the classical laplacian
  const double diffusion = 1.0 / (2.0 * dim);

  struct Mode {
    double lambda;
    std::array<int, 3> m;
  };
  std::vector<Mode> modes;
  const int cap = k + 1;
  for (int m1 = 0; m1 <= cap; ++m1) {
    for (int m2 = 0; m2 <= cap; ++m2) {
      for (int m3 = 0; m3 <= (dim == 3 ? cap : 0); ++m3) {
        double s = m1 * m1 / (rect.extent[0] * rect.extent[0]) +
                   m2 * m2 / (rect.extent[1] * rect.extent[1]);
        if (dim == 3) s += m3 * m3 / (rect.extent[2] * rect.extent[2]);
        modes.push_back({diffusion * pi * pi * s, {m1, m2, m3}});
      }
    }
  }
  std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
    if (a.lambda != b.lambda) return a.lambda < b.lambda;
    return a.m < b.m;
  });

  const int n = lat.n_sites();
  SpectralBasis basis;
  basis.origin = SpectralBasis::Origin::closed_form_rectangle;
  basis.eps = lat.eps;
  basis.dim = lat.dim;
  basis.lambda.resize(k);
  basis.modes.resize(n, k);
  const double vol = cell_volume(lat.eps, lat.dim);
  for (int j = 0; j < k; ++j) {
    basis.lambda[j] = modes[j].lambda;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d x = lat.position(i);
      double val = 1.0;
      for (int c = 0; c < dim; ++c)
        val *= std::cos(modes[j].m[c] * pi * x[c] / rect.extent[c]);
      v[i] = val;
    }
    v /= std::sqrt(vol * v.squaredNorm());
    fix_sign(v);
    basis.modes.col(j) = v;
  }
  // Informational: residuals against the lattice operator. These do NOT
  // vanish with eps — flat-face rows weight the tangential second
  // difference by 1/3 instead of the interior 1/4, so the sup-norm
  // residual of mode (1,0) tends to pi^2 |1/3 - 1/4| = pi^2/12. The
  // boundary construction is consistent for the evolution of measures,
  // not in the sup norm of the generator.
  const Eigen::SparseMatrix<double> A = discrete_laplacian(lat).matrix();
  basis.residual.resize(k);
  for (int j = 0; j < k; ++j)
    basis.residual[j] = rel_residual(A, basis.modes.col(j), basis.lambda[j]);
  return basis;
}

// ---------------------------------------------------------------------------
// uniformization
// ---------------------------------------------------------------------------

HeatEvolver::HeatEvolver(const LinearOperator& op, double tail_tol,
                         std::int64_t max_terms)
    : op_(op), tail_tol_(tail_tol), max_terms_(max_terms) {
  lambda_unif_ = 0.0;
  for (int i = 0; i < op.n; ++i)
    lambda_unif_ = std::max(lambda_unif_, -op.diag[i]);
}

Eigen::VectorXd HeatEvolver::evolve(const Eigen::VectorXd& rho, double t) const {
  if (t < 0) throw std::invalid_argument("evolve_heat: negative time");
  if (rho.size() != op_.n)
    throw std::invalid_argument("evolve_heat: size mismatch");
  const double a = lambda_unif_ * t;
  if (a == 0.0) return rho;

  // Poisson(a) window with tail mass far below tail_tol
  const double spread = 12.0 * std::sqrt(a) + 40.0;
  const std::int64_t lo =
      std::max<std::int64_t>(0, static_cast<std::int64_t>(a - spread));
  const std::int64_t hi = static_cast<std::int64_t>(a + spread) + 1;
  if (hi > max_terms_) {
    std::ostringstream msg;
    msg << "evolve_heat: " << hi << " series terms exceed the cap of "
        << max_terms_;
    throw BudgetError(msg.str());
  }
  const double loga = std::log(a);
  double mass = 0.0;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(op_.n);
  Eigen::VectorXd v = rho;
  for (std::int64_t m = 0; m <= hi; ++m) {
    if (m >= lo) {
      const double w = std::exp(-a + m * loga - std::lgamma(m + 1.0));
      if (w > 0) {
        out += w * v;
        mass += w;
      }
    }
    if (m < hi) v += op_.apply(v) / lambda_unif_;  // v <- P v
  }
  if (mass < 1.0 - tail_tol_)
    throw std::runtime_error("evolve_heat: truncated Poisson mass fell short");
  // Renormalize by the window mass: each kernel power preserves constants exactly
  // (difference-form apply), so constants and total mass survive bit-exactly instead
  // of being scaled by 1 - tail.
  return out / mass;
}

Eigen::VectorXd evolve_heat(const LinearOperator& op, const Eigen::VectorXd& rho,
                            double t, double tail_tol) {
  return HeatEvolver(op, tail_tol).evolve(rho, t);
}

Eigen::VectorXd normalize_tv(const Eigen::VectorXd& rho, double eps, int dim) {
  const double tv = cell_volume(eps, dim) * rho.cwiseAbs().sum();
  if (tv == 0.0) return rho;
  return (2.0 / tv) * rho;
}

double normalizer_C(const HeatEvolver& fwd, const Eigen::VectorXd& rho0,
                    double t, double eps, int dim) {
  const Eigen::VectorXd rt = fwd.evolve(rho0, t);
  const double tv = cell_volume(eps, dim) * rt.cwiseAbs().sum();
  if (tv < 1e-12)
    throw std::runtime_error("normalizer_C: evolved total variation underflow");
  return 2.0 / tv;
}

// ---------------------------------------------------------------------------
// plain-text basis format
// ---------------------------------------------------------------------------

void export_basis(const SpectralBasis& b, std::ostream& out) {
  out << "abrw-basis-v1\n";
  out << "origin " << (b.origin == SpectralBasis::Origin::numeric
                           ? "numeric"
                           : "closed_form_rectangle")
      << "\n";
  out << "d " << b.dim << "\n";
  out << "eps " << format17(b.eps) << "\n";
  out << "k " << b.k() << "\n";
  out << "sites " << b.modes.rows() << "\n";
  out << "lambda";
  for (int i = 0; i < b.k(); ++i) out << " " << format17(b.lambda[i]);
  out << "\nresidual";
  for (int i = 0; i < b.k(); ++i) out << " " << format17(b.residual[i]);
  out << "\n";
  for (int r = 0; r < b.modes.rows(); ++r) {
    for (int c = 0; c < b.modes.cols(); ++c)
      out << (c ? " " : "") << format17(b.modes(r, c));
    out << "\n";
  }
}

SpectralBasis import_basis(std::istream& in) {
  std::string tok;
  in >> tok;
  if (tok != "abrw-basis-v1") throw LatticeError("basis: bad magic");
  SpectralBasis b;
  in >> tok;
  if (tok != "origin") throw LatticeError("basis: expected origin");
  in >> tok;
  b.origin = tok == "numeric" ? SpectralBasis::Origin::numeric
                              : SpectralBasis::Origin::closed_form_rectangle;
  long k = 0, n = 0;
  in >> tok >> b.dim;
  if (tok != "d") throw LatticeError("basis: expected d");
  in >> tok >> b.eps;
  if (tok != "eps") throw LatticeError("basis: expected eps");
  in >> tok >> k;
  if (tok != "k") throw LatticeError("basis: expected k");
  in >> tok >> n;
  if (tok != "sites") throw LatticeError("basis: expected sites");
  b.lambda.resize(k);
  b.residual.resize(k);
  b.modes.resize(n, k);
  in >> tok;
  if (tok != "lambda") throw LatticeError("basis: expected lambda");
  for (long i = 0; i < k; ++i) in >> b.lambda[i];
  in >> tok;
  if (tok != "residual") throw LatticeError("basis: expected residual");
  for (long i = 0; i < k; ++i) in >> b.residual[i];
  for (long r = 0; r < n; ++r)
    for (long c = 0; c < k; ++c) in >> b.modes(r, c);
  if (!in) throw LatticeError("basis: truncated");
  return b;
}

void export_basis_file(const SpectralBasis& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LatticeError("export_basis: cannot open " + path);
  export_basis(b, out);
}

}  // namespace abrw
