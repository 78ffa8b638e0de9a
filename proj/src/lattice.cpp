#include "abrw/lattice.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "abrw/errors.hpp"

namespace abrw {

namespace {

// ---------------------------------------------------------------------------
// dense two-phase simplex for the tiny boundary LPs
// maximize c.x subject to A x = b, x >= 0; returns empty when infeasible
// ---------------------------------------------------------------------------
std::optional<Eigen::VectorXd> simplex_max(Eigen::MatrixXd A, Eigen::VectorXd b,
                                           const Eigen::VectorXd& c) {
  const double tol = 1e-11;
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  for (int i = 0; i < m; ++i)
    if (b[i] < 0) {
      A.row(i) *= -1.0;
      b[i] = -b[i];
    }

  Eigen::MatrixXd T(m, n + m);
  T.leftCols(n) = A;
  T.rightCols(m) = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd rhs = b;
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  auto pivot = [&](int r, int col) {
    const double piv = T(r, col);
    T.row(r) /= piv;
    rhs[r] /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == r) continue;
      const double f = T(i, col);
      if (f != 0.0) {
        T.row(i) -= f * T.row(r);
        rhs[i] -= f * rhs[r];
      }
    }
    basis[r] = col;
  };

  // Bland's rule throughout: entering = lowest improving index, leaving =
  // lowest basis index among minimal ratios; finite termination guaranteed
  auto run = [&](const Eigen::VectorXd& obj, int col_limit) -> bool {
    for (int iter = 0; iter < 20000; ++iter) {
      Eigen::VectorXd obj_basis(m);
      for (int i = 0; i < m; ++i) obj_basis[i] = obj[basis[i]];
      int enter = -1;
      for (int j = 0; j < col_limit; ++j) {
        if (obj[j] - obj_basis.dot(T.col(j)) > tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (T(i, enter) > tol) {
          const double ratio = rhs[i] / T(i, enter);
          const double tie = 1e-13 * (1.0 + std::abs(ratio));
          if (leave < 0 || ratio < best - tie) {
            leave = i;
            best = ratio;
          } else if (ratio <= best + tie && basis[i] < basis[leave]) {
            leave = i;
            best = std::min(best, ratio);
          }
        }
      }
      if (leave < 0) return false;  // unbounded
      pivot(leave, enter);
    }
    return false;
  };

  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(n + m);
  phase1.tail(m).setConstant(-1.0);
  if (!run(phase1, n + m)) return std::nullopt;
  double infeas = 0.0;
  for (int i = 0; i < m; ++i)
    if (basis[i] >= n) infeas += rhs[i];
  if (infeas > 1e-9) return std::nullopt;
  for (int i = 0; i < m; ++i) {
    if (basis[i] >= n) {
      for (int j = 0; j < n; ++j) {
        if (std::abs(T(i, j)) > 1e-9) {
          pivot(i, j);
          break;
        }
      }
    }
  }

  Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(n + m);
  phase2.head(n) = c;
  if (!run(phase2, n)) return std::nullopt;  // unbounded: not expected here

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) x[basis[i]] = rhs[i];
  return x;
}

// orthonormal tangent basis completing the unit normal
std::vector<Eigen::Vector3d> tangent_basis(const Eigen::Vector3d& n, int dim) {
  std::vector<Eigen::Vector3d> tans;
  // start from the coordinate axes least aligned with n, Gram-Schmidt
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(n[a]) < std::abs(n[b]); });
  for (int idx : order) {
    if (idx >= dim) continue;
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    v[idx] = 1.0;
    v -= v.dot(n) * n;
    for (const auto& t : tans) v -= v.dot(t) * t;
    const double len = v.norm();
    if (len > 1e-8) {
      tans.push_back(v / len);
      if (static_cast<int>(tans.size()) == dim - 1) break;
    }
  }
  if (static_cast<int>(tans.size()) != dim - 1)
    throw LatticeError("solve_boundary_jumps: degenerate tangent basis");
  return tans;
}

bool lex_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  for (int i = 0; i < 3; ++i) {
    if (a[i] < b[i] - 1e-14) return true;
    if (a[i] > b[i] + 1e-14) return false;
  }
  return false;
}

}  // namespace

Eigen::VectorXd solve_boundary_jumps(const std::vector<Eigen::Vector3d>& directions,
                                     const Eigen::Vector3d& inward_normal, int dim) {
  const int k = static_cast<int>(directions.size());
  if (k == 0) throw LatticeError("solve_boundary_jumps: site has no neighbors");
  Eigen::Vector3d n = inward_normal / inward_normal.norm();
  const auto tans = tangent_basis(n, dim);

  // lexicographic direction order for the deterministic tie-break passes
  std::vector<int> lex(k);
  for (int j = 0; j < k; ++j) lex[j] = j;
  std::sort(lex.begin(), lex.end(),
            [&](int a, int b) { return lex_less(directions[a], directions[b]); });

  // variables: z (min prob), s_0..s_{k-1} (p_j = z + s_j), t (inward drift)
  // rows: sum p = 1; tangential components of sum p_j d_j vanish; drift - t = 0
  const int nv = k + 2;
  auto base_rows = [&](Eigen::MatrixXd& A, Eigen::VectorXd& b) {
    const int m = 1 + (dim - 1) + 1;
    A = Eigen::MatrixXd::Zero(m, nv);
    b = Eigen::VectorXd::Zero(m);
    A(0, 0) = k;
    for (int j = 0; j < k; ++j) A(0, 1 + j) = 1.0;
    b[0] = 1.0;
    for (int mrow = 0; mrow < dim - 1; ++mrow) {
      double zc = 0.0;
      for (int j = 0; j < k; ++j) {
        const double c = directions[j].dot(tans[mrow]);
        A(1 + mrow, 1 + j) = c;
        zc += c;
      }
      A(1 + mrow, 0) = zc;
    }
    double zn = 0.0;
    for (int j = 0; j < k; ++j) {
      const double c = directions[j].dot(n);
      A(dim, 1 + j) = c;
      zn += c;
    }
    A(dim, 0) = zn;
    A(dim, 1 + k) = -1.0;
  };

  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  base_rows(A, b);
  Eigen::VectorXd obj = Eigen::VectorXd::Zero(nv);
  obj[0] = 1.0;
  auto sol = simplex_max(A, b, obj);
  if (!sol) throw LatticeError("solve_boundary_jumps: no nonnegative solution");

  // pin the achieved min probability, then maximize each p_j in direction order
  std::vector<std::pair<int, double>> fixed;  // (variable index, value)
  fixed.push_back({0, (*sol)[0]});
  for (int pass = 0; pass < k; ++pass) {
    const int var = 1 + lex[pass];
    Eigen::MatrixXd Af;
    Eigen::VectorXd bf;
    base_rows(Af, bf);
    const int extra = static_cast<int>(fixed.size());
    Af.conservativeResize(Af.rows() + extra, nv);
    bf.conservativeResize(bf.size() + extra);
    for (int e = 0; e < extra; ++e) {
      Af.row(dim + 1 + e).setZero();
      Af(dim + 1 + e, fixed[e].first) = 1.0;
      bf[dim + 1 + e] = fixed[e].second;
    }
    Eigen::VectorXd o = Eigen::VectorXd::Zero(nv);
    o[var] = 1.0;
    auto s2 = simplex_max(Af, bf, o);
    if (!s2) break;  // numerically over-constrained; keep the current solution
    sol = s2;
    fixed.push_back({var, (*s2)[var]});
  }

  Eigen::VectorXd p(k);
  for (int j = 0; j < k; ++j) p[j] = std::max(0.0, (*sol)[0] + (*sol)[1 + j]);
  p /= p.sum();

  // drift must point strictly inward
  Eigen::Vector3d drift = Eigen::Vector3d::Zero();
  for (int j = 0; j < k; ++j) drift += p[j] * directions[j];
  if (drift.dot(n) <= 1e-12)
    throw LatticeError("solve_boundary_jumps: drift cannot point inward");
  return p;
}

Eigen::VectorXd solve_boundary_jumps(const Lattice& lat, int site,
                                     const Eigen::Vector3d& inward_normal) {
  std::vector<Eigen::Vector3d> dirs;
  dirs.reserve(lat.neighbors[site].size());
  for (int nb : lat.neighbors[site]) {
    Eigen::Vector3d d = (lat.coords[nb] - lat.coords[site]).cast<double>();
    dirs.push_back(d / d.norm());
  }
  return solve_boundary_jumps(dirs, inward_normal, lat.dim);
}

double compute_holding_time(const Lattice& lat, int site) {
  double h = 0.0;
  const auto& nbs = lat.neighbors[site];
  const auto& p = lat.jump_prob[site];
  for (std::size_t j = 0; j < nbs.size(); ++j) {
    const Eigen::Vector3d dx = lat.position(nbs[j]) - lat.position(site);
    h += p[j] * dx.squaredNorm();
  }
  return h;
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

Lattice build_lattice(const DomainSpec& dom, double eps) {
  if (eps <= 0) throw std::invalid_argument("build_lattice: eps must be positive");
  const int dim = dom.dim;
  const double scale = std::max(1.0, (dom.box_hi - dom.box_lo).cwiseAbs().maxCoeff());
  const double in_tol = 1e-12 * scale;

  std::array<int, 3> klo = {0, 0, 0}, khi = {0, 0, 0};
  for (int i = 0; i < dim; ++i) {
    klo[i] = static_cast<int>(std::ceil(dom.box_lo[i] / eps - 1e-9));
    khi[i] = static_cast<int>(std::floor(dom.box_hi[i] / eps + 1e-9));
  }

  // enumerate candidate sites in lexicographic coordinate order
  std::map<std::array<int, 3>, int> index_of;
  std::vector<std::array<int, 3>> keys;
  for (int k1 = klo[0]; k1 <= khi[0]; ++k1) {
    for (int k2 = klo[1]; k2 <= khi[1]; ++k2) {
      for (int k3 = klo[2]; k3 <= khi[2]; ++k3) {
        const Eigen::Vector3d pos(eps * k1, eps * k2, eps * k3);
        if (dom.contains(pos, in_tol)) {
          keys.push_back({k1, k2, k3});
        }
      }
    }
  }
  for (std::size_t i = 0; i < keys.size(); ++i) index_of[keys[i]] = static_cast<int>(i);

  auto neighbor_keys = [&](const std::array<int, 3>& key) {
    std::vector<std::array<int, 3>> out;
    for (int axis = 0; axis < dim; ++axis) {
      for (int sgn : {-1, +1}) {
        auto nb = key;
        nb[axis] += sgn;
        out.push_back(nb);
      }
    }
    return out;
  };

  // prune to the fixpoint: every surviving site keeps at least dim neighbors
  std::vector<char> alive(keys.size(), 1);
  int pruned = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (!alive[i]) continue;
      int deg = 0;
      for (const auto& nb : neighbor_keys(keys[i])) {
        auto it = index_of.find(nb);
        if (it != index_of.end() && alive[it->second]) ++deg;
      }
      if (deg < dim) {
        alive[i] = 0;
        ++pruned;
        changed = true;
      }
    }
  }

  Lattice lat;
  lat.dim = dim;
  lat.eps = eps;
  lat.pruned_sites = pruned;
  std::vector<int> newindex(keys.size(), -1);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (alive[i]) {
      newindex[i] = lat.n_sites();
      lat.coords.emplace_back(keys[i][0], keys[i][1], keys[i][2]);
    }
  }
  const int n = lat.n_sites();
  if (n == 0) throw LatticeError("build_lattice: no sites survive pruning");

  lat.neighbors.resize(n);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!alive[i]) continue;
    const int si = newindex[i];
    for (const auto& nb : neighbor_keys(keys[i])) {
      auto it = index_of.find(nb);
      if (it != index_of.end() && alive[it->second])
        lat.neighbors[si].push_back(newindex[it->second]);
    }
    std::sort(lat.neighbors[si].begin(), lat.neighbors[si].end());
  }

  // connectivity
  {
    std::vector<char> seen(n, 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      for (int y : lat.neighbors[x]) {
        if (!seen[y]) {
          seen[y] = 1;
          ++count;
          stack.push_back(y);
        }
      }
    }
    if (count != n) {
      std::ostringstream msg;
      msg << "build_lattice: lattice is disconnected (component of site 0 has "
          << count << " of " << n << " sites)";
      throw LatticeError(msg.str());
    }
  }

  lat.jump_prob.resize(n);
  lat.holding.resize(n);
  lat.boundary.assign(n, 0);
  lat.inward_normal.assign(n, Eigen::Vector3d::Zero());
  lat.c1 = Eigen::VectorXd::Zero(n);

  for (int x = 0; x < n; ++x) {
    const int deg = lat.neighbor_count(x);
    lat.boundary[x] = (deg < 2 * dim) ? 1 : 0;
    if (!lat.boundary[x]) {
      lat.jump_prob[x].assign(deg, 1.0 / (2 * dim));
    } else {
      BoundaryPoint bp;
      try {
        bp = nearest_boundary_normal(dom, lat.position(x));
      } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "build_lattice: boundary normal failed at site " << x << " ("
            << lat.position(x).transpose() << "): " << e.what();
        throw LatticeError(msg.str());
      }
      lat.inward_normal[x] = bp.inward_normal;
      Eigen::VectorXd p;
      try {
        p = solve_boundary_jumps(lat, x, bp.inward_normal);
      } catch (const LatticeError& e) {
        std::ostringstream msg;
        msg << e.what() << " at site " << x << " (" << lat.position(x).transpose()
            << ")";
        throw LatticeError(msg.str());
      }
      lat.jump_prob[x].assign(p.data(), p.data() + p.size());
      Eigen::Vector3d drift = Eigen::Vector3d::Zero();
      for (int j = 0; j < deg; ++j) {
        Eigen::Vector3d d =
            (lat.coords[lat.neighbors[x][j]] - lat.coords[x]).cast<double>();
        drift += p[j] * (d / d.norm());
      }
      lat.c1[x] = drift.dot(bp.inward_normal);
    }
    lat.holding[x] = compute_holding_time(lat, x);
    if (!(lat.holding[x] > 0))
      throw LatticeError("build_lattice: nonpositive holding time");
  }
  return lat;
}

LatticeCheckReport check_jump_constraints(const Lattice& lat) {
  LatticeCheckReport rep;
  rep.min_c1 = std::numeric_limits<double>::infinity();
  for (int x = 0; x < lat.n_sites(); ++x) {
    double rowsum = 0.0;
    for (double p : lat.jump_prob[x]) rowsum += p;
    const double rres = std::abs(rowsum - 1.0);
    if (rres > rep.max_prob_row_residual) rep.max_prob_row_residual = rres;
    if (rres > 1e-12 && rep.bad_row_site < 0) rep.bad_row_site = x;

    if (!lat.boundary[x]) {
      // interior sites must have zero mean jump
      Eigen::Vector3d drift = Eigen::Vector3d::Zero();
      for (std::size_t j = 0; j < lat.neighbors[x].size(); ++j)
        drift += lat.jump_prob[x][j] *
                 (lat.coords[lat.neighbors[x][j]] - lat.coords[x]).cast<double>();
      const double res = drift.norm();  // units of eps
      if (res > rep.max_tangential_residual) {
        rep.max_tangential_residual = res;
        rep.worst_site = x;
      }
      continue;
    }
    if (!lat.has_normals) continue;
    const Eigen::Vector3d nrm = lat.inward_normal[x];
    Eigen::Vector3d drift = Eigen::Vector3d::Zero();
    for (std::size_t j = 0; j < lat.neighbors[x].size(); ++j)
      drift += lat.jump_prob[x][j] *
               (lat.coords[lat.neighbors[x][j]] - lat.coords[x]).cast<double>();
    const double along = drift.dot(nrm);
    const double tangential = (drift - along * nrm).norm();  // units of eps
    if (tangential > rep.max_tangential_residual) {
      rep.max_tangential_residual = tangential;
      rep.worst_site = x;
    }
    if (along < rep.min_c1) rep.min_c1 = along;
  }
  if (!std::isfinite(rep.min_c1)) rep.min_c1 = 0.0;  // no boundary sites
  return rep;
}

// ---------------------------------------------------------------------------
// plain-text format
// ---------------------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void export_lattice(const Lattice& lat, std::ostream& out) {
  out << "abrw-lattice-v1\n";
  out << "d " << lat.dim << "\n";
  out << "eps " << fmt17(lat.eps) << "\n";
  out << "sites " << lat.n_sites() << "\n";
  for (int i = 0; i < lat.n_sites(); ++i) {
    out << "site " << i;
    for (int c = 0; c < lat.dim; ++c) out << " " << lat.coords[i][c];
    out << " " << int(lat.boundary[i]) << " " << fmt17(lat.holding[i]) << "\n";
  }
  std::size_t edges = 0;
  for (int i = 0; i < lat.n_sites(); ++i) edges += lat.neighbors[i].size();
  out << "edges " << edges << "\n";
  for (int i = 0; i < lat.n_sites(); ++i)
    for (std::size_t j = 0; j < lat.neighbors[i].size(); ++j)
      out << "edge " << i << " " << lat.neighbors[i][j] << " "
          << fmt17(lat.jump_prob[i][j]) << "\n";
}

Lattice import_lattice(std::istream& in) {
  auto fail = [](const std::string& why) -> void {
    throw LatticeError("import_lattice: " + why);
  };
  std::string tok;
  in >> tok;
  if (tok != "abrw-lattice-v1") fail("bad magic '" + tok + "'");
  Lattice lat;
  lat.has_normals = false;
  int n = 0;
  in >> tok;
  if (tok != "d") fail("expected 'd'");
  in >> lat.dim;
  if (lat.dim != 2 && lat.dim != 3) fail("d must be 2 or 3");
  in >> tok;
  if (tok != "eps") fail("expected 'eps'");
  in >> lat.eps;
  in >> tok;
  if (tok != "sites") fail("expected 'sites'");
  in >> n;
  if (!in || n <= 0) fail("bad site count");
  lat.coords.resize(n, Eigen::Vector3i::Zero());
  lat.neighbors.resize(n);
  lat.jump_prob.resize(n);
  lat.holding.resize(n);
  lat.boundary.assign(n, 0);
  lat.inward_normal.assign(n, Eigen::Vector3d::Zero());
  lat.c1 = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    int idx = -1, bflag = 0;
    in >> tok >> idx;
    if (tok != "site" || idx != i) fail("bad site line");
    for (int c = 0; c < lat.dim; ++c) in >> lat.coords[i][c];
    in >> bflag >> lat.holding[i];
    lat.boundary[i] = static_cast<std::uint8_t>(bflag);
  }
  std::size_t edges = 0;
  in >> tok >> edges;
  if (tok != "edges") fail("expected 'edges'");
  for (std::size_t e = 0; e < edges; ++e) {
    int x = -1, y = -1;
    double p = 0.0;
    in >> tok >> x >> y >> p;
    if (tok != "edge" || x < 0 || x >= n || y < 0 || y >= n) fail("bad edge line");
    lat.neighbors[x].push_back(y);
    lat.jump_prob[x].push_back(p);
  }
  if (!in) fail("truncated file");
  return lat;
}

void export_lattice_file(const Lattice& lat, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LatticeError("export_lattice: cannot open " + path);
  export_lattice(lat, out);
}

Lattice import_lattice_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LatticeError("import_lattice: cannot open " + path);
  return import_lattice(in);
}

}  // namespace abrw
