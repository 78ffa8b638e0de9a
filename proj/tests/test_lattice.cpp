// Lattice construction, boundary jump laws, holding times, the site
// laplacian / its adjoint, and the plain-text export format.
//
// Reference values in this file were recomputed independently (direct
// enumeration of lattice points, hand evaluation of the small linear
// systems, closed-form drift sums) before being frozen here.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "abrw/domain.hpp"
#include "abrw/errors.hpp"
#include "abrw/lattice.hpp"
#include "abrw/operators.hpp"
#include "abrw/rng.hpp"

using namespace abrw;

namespace {

int find_site(const Lattice& lat, int i, int j) {
  for (int s = 0; s < lat.n_sites(); ++s)
    if (lat.coords[s][0] == i && lat.coords[s][1] == j) return s;
  REQUIRE(false);
  return -1;
}

Eigen::Vector3d drift_of(const Lattice& lat, int site) {
  Eigen::Vector3d d = Eigen::Vector3d::Zero();
  for (std::size_t j = 0; j < lat.neighbors[site].size(); ++j)
    d += lat.jump_prob[site][j] *
         (lat.position(lat.neighbors[site][j]) - lat.position(site));
  return d;
}

// Minimal hand-built lattice for cases build_lattice cannot produce.
Lattice manual_lattice(int dim, double eps,
                       std::vector<Eigen::Vector3i> coords,
                       std::vector<std::vector<std::int32_t>> neighbors,
                       std::vector<std::vector<double>> jump_prob) {
  Lattice lat;
  lat.dim = dim;
  lat.eps = eps;
  lat.coords = std::move(coords);
  lat.neighbors = std::move(neighbors);
  lat.jump_prob = std::move(jump_prob);
  const int n = lat.n_sites();
  lat.holding = Eigen::VectorXd::Constant(n, eps * eps);
  lat.boundary.assign(n, 0);
  lat.inward_normal.assign(n, Eigen::Vector3d::Zero());
  lat.c1 = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) lat.holding[i] = compute_holding_time(lat, i);
  return lat;
}

}  // namespace

TEST_CASE("unit square at eps 1/4 keeps all 25 sites") {
  const Lattice lat = build_lattice(DomainSpec::rectangle(1.0, 1.0), 0.25);
  CHECK(lat.n_sites() == 25);
  CHECK(lat.pruned_sites == 0);
  int boundary = 0;
  for (int i = 0; i < lat.n_sites(); ++i) {
    CHECK(lat.neighbor_count(i) >= 2);  // corners and edges survive
    CHECK(lat.boundary[i] == (lat.neighbor_count(i) < 4 ? 1 : 0));
    boundary += lat.boundary[i];
  }
  CHECK(boundary == 16);  // 5x5 grid: all but the 3x3 interior
}

TEST_CASE("interior sites jump uniformly with holding time eps^2") {
  const double eps = 0.25;
  const Lattice lat = build_lattice(DomainSpec::rectangle(1.0, 1.0), eps);
  const int center = find_site(lat, 2, 2);
  REQUIRE(lat.neighbor_count(center) == 4);
  for (double p : lat.jump_prob[center]) CHECK(p == 0.25);
  CHECK(lat.holding[center] == eps * eps);
  // every jump on this lattice has length eps, so h = eps^2 everywhere
  for (int i = 0; i < lat.n_sites(); ++i) CHECK(lat.holding[i] == eps * eps);
}

TEST_CASE("flat-face boundary site gets the one-third law") {
  const double eps = 0.25;
  const Lattice lat = build_lattice(DomainSpec::rectangle(1.0, 1.0), eps);
  const int site = find_site(lat, 0, 2);  // on the x1 = 0 face, mid-edge
  REQUIRE(lat.neighbor_count(site) == 3);
  for (double p : lat.jump_prob[site])
    CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  // mean drift (eps/3) e1, i.e. c1 = 1/3 in units of eps
  const Eigen::Vector3d d = drift_of(lat, site);
  CHECK(d[0] == doctest::Approx(eps / 3.0).epsilon(1e-12));
  CHECK(std::abs(d[1]) <= 1e-16);
  CHECK(lat.inward_normal[site].isApprox(Eigen::Vector3d(1, 0, 0), 1e-12));
  CHECK(lat.c1[site] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("corner site splits evenly along the bisector normal") {
  const double eps = 0.25;
  const Lattice lat = build_lattice(DomainSpec::rectangle(1.0, 1.0), eps);
  const int site = find_site(lat, 0, 0);
  REQUIRE(lat.neighbor_count(site) == 2);
  for (double p : lat.jump_prob[site])
    CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
  const double invsqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(lat.inward_normal[site].isApprox(
      Eigen::Vector3d(invsqrt2, invsqrt2, 0.0), 1e-12));
  // drift magnitude eps/sqrt(2) along the bisector: c1 = 1/sqrt(2)
  CHECK(lat.c1[site] == doctest::Approx(invsqrt2).epsilon(1e-12));
  const Eigen::Vector3d d = drift_of(lat, site);
  const Eigen::Vector3d tangential =
      d - d.dot(lat.inward_normal[site]) * lat.inward_normal[site];
  CHECK(tangential.norm() <= 1e-12 * eps);
}

TEST_CASE("nearest boundary point and inward normal") {
  const DomainSpec rect = DomainSpec::rectangle(1.0, 1.0);

  SUBCASE("point on a flat face") {
    const BoundaryPoint bp = nearest_boundary_normal(rect, {0.0, 0.5, 0.0});
    CHECK(bp.inward_normal.isApprox(Eigen::Vector3d(1, 0, 0), 1e-12));
    CHECK(bp.point.isApprox(Eigen::Vector3d(0.0, 0.5, 0.0), 1e-12));
  }
  SUBCASE("corner tie resolves to the angle bisector") {
    const BoundaryPoint bp = nearest_boundary_normal(rect, {0.0, 0.0, 0.0});
    const double invsqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(bp.inward_normal.isApprox(
        Eigen::Vector3d(invsqrt2, invsqrt2, 0.0), 1e-12));
  }
  SUBCASE("disc normal is radial") {
    const DomainSpec disc = DomainSpec::disc({0.0, 0.0, 0.0}, 1.0, 2);
    const BoundaryPoint bp = nearest_boundary_normal(disc, {0.875, 0.0, 0.0});
    CHECK((bp.inward_normal - Eigen::Vector3d(-1, 0, 0)).norm() <= 1e-6);
    CHECK(std::abs(bp.inward_normal.norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("boundary jump law solver on explicit direction sets") {
  SUBCASE("flat face, three neighbors") {
    const std::vector<Eigen::Vector3d> dirs = {
        {1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
    const Eigen::VectorXd p =
        solve_boundary_jumps(dirs, Eigen::Vector3d(1, 0, 0), 2);
    REQUIRE(p.size() == 3);
    for (int j = 0; j < 3; ++j)
      CHECK(p[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("corner, two neighbors") {
    const std::vector<Eigen::Vector3d> dirs = {{1, 0, 0}, {0, 1, 0}};
    const double invsqrt2 = 1.0 / std::sqrt(2.0);
    const Eigen::VectorXd p = solve_boundary_jumps(
        dirs, Eigen::Vector3d(invsqrt2, invsqrt2, 0.0), 2);
    REQUIRE(p.size() == 2);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
    // drift parallel to the normal with positive inward component
    Eigen::Vector3d d = p[0] * dirs[0] + p[1] * dirs[1];
    const double c1 = d.dot(Eigen::Vector3d(invsqrt2, invsqrt2, 0.0));
    CHECK(c1 > 0.0);
    CHECK((d - c1 * Eigen::Vector3d(invsqrt2, invsqrt2, 0.0)).norm() <= 1e-12);
  }
  SUBCASE("drift cannot point along the requested normal") {
    // both directions lie on one axis, normal on the other: infeasible
    const std::vector<Eigen::Vector3d> dirs = {{1, 0, 0}, {-1, 0, 0}};
    CHECK_THROWS_AS(
        solve_boundary_jumps(dirs, Eigen::Vector3d(0, 1, 0), 2),
        LatticeError);
  }
}

TEST_CASE("holding time of mixed-length jumps") {
  // one length-eps jump and one length-eps*sqrt(2) jump at p = 1/2 each:
  // h = (1/2) eps^2 + (1/2) 2 eps^2 = (3/2) eps^2
  const double eps = 0.5;
  Lattice lat = manual_lattice(
      2, eps, {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}},
      {{1, 2}, {0}, {0}}, {{0.5, 0.5}, {1.0}, {1.0}});
  CHECK(compute_holding_time(lat, 0) == 1.5 * eps * eps);  // 0.375 exactly
}

TEST_CASE("disc lattices: counts, pruning fixpoint, constraints") {
  SUBCASE("radius 1 at eps 1/8") {
    const Lattice lat =
        build_lattice(DomainSpec::disc({0, 0, 0}, 1.0, 2), 0.125);
    CHECK(lat.n_sites() == 193);   // direct enumeration
    CHECK(lat.pruned_sites == 4);  // the four axis-extreme points
    // area heuristic: pi r^2 / eps^2 within 15%
    const double expected = M_PI / (0.125 * 0.125);
    CHECK(lat.n_sites() >= 0.85 * expected);
    CHECK(lat.n_sites() <= 1.15 * expected);
    // pruning reached a fixpoint: nothing left with fewer than 2 neighbors
    for (int i = 0; i < lat.n_sites(); ++i) CHECK(lat.neighbor_count(i) >= 2);
  }
  SUBCASE("radius 1 at eps 1/16") {
    const Lattice lat =
        build_lattice(DomainSpec::disc({0, 0, 0}, 1.0, 2), 0.0625);
    CHECK(lat.n_sites() == 793);
    CHECK(lat.pruned_sites == 4);
  }
  SUBCASE("radius 1/2 at eps 1/8") {
    const Lattice lat =
        build_lattice(DomainSpec::disc({0, 0, 0}, 0.5, 2), 0.125);
    CHECK(lat.n_sites() == 45);
  }
}

TEST_CASE("constraint report on reference lattices") {
  SUBCASE("unit square at eps 1/32") {
    const Lattice lat = build_lattice(DomainSpec::rectangle(1.0, 1.0), 1.0 / 32);
    const LatticeCheckReport rep = check_jump_constraints(lat);
    CHECK(rep.max_prob_row_residual <= 1e-12);
    CHECK(rep.max_tangential_residual <= 1e-10);  // units of eps
    CHECK(rep.min_c1 > 0.0);
    CHECK(rep.min_c1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(rep.bad_row_site == -1);
  }
  SUBCASE("disc at eps 1/16") {
    const Lattice lat =
        build_lattice(DomainSpec::disc({0, 0, 0}, 1.0, 2), 0.0625);
    const LatticeCheckReport rep = check_jump_constraints(lat);
    CHECK(rep.max_prob_row_residual <= 1e-12);
    CHECK(rep.max_tangential_residual <= 1e-10);
    CHECK(rep.min_c1 > 0.3);
  }
}

TEST_CASE("constraint report flags corrupted rows") {
  Lattice lat = build_lattice(DomainSpec::rectangle(1.0, 1.0), 0.25);

  SUBCASE("row sum broken") {
    const int site = find_site(lat, 0, 2);
    lat.jump_prob[site][0] += 0.01;
    const LatticeCheckReport rep = check_jump_constraints(lat);
    CHECK(rep.bad_row_site == site);
    CHECK(rep.max_prob_row_residual == doctest::Approx(0.01).epsilon(1e-9));
  }
  SUBCASE("tangential drift introduced") {
    const int site = find_site(lat, 0, 2);
    // neighbors of (0,2) in index order: (0,1), (0,3), (1,2);
    // (0.5, 0.25, 0.25) sums to 1 but drifts along the face
    lat.jump_prob[site] = {0.5, 0.25, 0.25};
    const LatticeCheckReport rep = check_jump_constraints(lat);
    CHECK(rep.bad_row_site == -1);
    CHECK(rep.worst_site == site);
    CHECK(rep.max_tangential_residual ==
          doctest::Approx(0.25).epsilon(1e-9));  // units of eps
  }
}

TEST_CASE("degenerate and empty constructions") {
  SUBCASE("eps too coarse leaves nothing") {
    CHECK_THROWS_AS(build_lattice(DomainSpec::rectangle(1.0, 1.0), 10.0),
                    LatticeError);
  }
  SUBCASE("disconnected implicit domain is rejected") {
    auto two_discs = [](const Eigen::Vector3d& x) {
      const double d1 = (x - Eigen::Vector3d(0, 0, 0)).norm() - 0.3;
      const double d2 = (x - Eigen::Vector3d(5, 0, 0)).norm() - 0.3;
      return std::min(d1, d2);
    };
    const DomainSpec dom = DomainSpec::implicit(
        two_discs, {-1, -1, 0}, {6, 1, 0}, 2);
    CHECK_THROWS_AS(build_lattice(dom, 0.125), LatticeError);
  }
  SUBCASE("implicit disc matches the native disc") {
    auto disc_sd = [](const Eigen::Vector3d& x) { return x.norm() - 0.5; };
    const DomainSpec dom = DomainSpec::implicit(
        disc_sd, {-1, -1, 0}, {1, 1, 0}, 2);
    const Lattice lat = build_lattice(dom, 0.125);
    CHECK(lat.n_sites() == 45);
    const LatticeCheckReport rep = check_jump_constraints(lat);
    CHECK(rep.max_prob_row_residual <= 1e-12);
    CHECK(rep.max_tangential_residual <= 1e-10);
    CHECK(rep.min_c1 > 0.0);
  }
}

TEST_CASE("one-site lattice yields the 1x1 zero operator") {
  Lattice lat = manual_lattice(2, 0.5, {{0, 0, 0}}, {{}}, {{}});
  lat.holding[0] = 0.25;  // value irrelevant: no off-diagonals
  const LinearOperator op = discrete_laplacian(lat);
  CHECK(op.n == 1);
  CHECK(op.diag[0] == 0.0);
  Eigen::VectorXd f(1);
  f << 3.7;
  CHECK(op.apply(f)[0] == 0.0);
}

TEST_CASE("interior laplacian row at eps 1/2") {
  // 3x3 lattice on the unit square; center site has off-diagonals
  // h^-1 p = 4 * (1/4) = 1 and diagonal -4, exactly
  const Lattice lat = build_lattice(DomainSpec::rectangle(1.0, 1.0), 0.5);
  REQUIRE(lat.n_sites() == 9);
  const int center = find_site(lat, 1, 1);
  const LinearOperator op = discrete_laplacian(lat);
  const Eigen::MatrixXd dense = Eigen::MatrixXd(op.matrix());
  for (int nb : lat.neighbors[center]) CHECK(dense(center, nb) == 1.0);
  CHECK(dense(center, center) == -4.0);
}

TEST_CASE("laplacian kills constants exactly") {
  const Lattice lat =
      build_lattice(DomainSpec::disc({0, 0, 0}, 1.0, 2), 0.125);
  const LinearOperator op = discrete_laplacian(lat);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(lat.n_sites());
  CHECK(op.apply(ones).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < op.n; ++i) CHECK(op.row_sum(i) == 0.0);
}

TEST_CASE("adjoint is the exact transpose") {
  const Lattice lat =
      build_lattice(DomainSpec::disc({0, 0, 0}, 1.0, 2), 0.125);
  const LinearOperator lap = discrete_laplacian(lat);
  const LinearOperator adj = adjoint_laplacian(lat);
  const Eigen::MatrixXd a = Eigen::MatrixXd(lap.matrix());
  const Eigen::MatrixXd b = Eigen::MatrixXd(adj.matrix());
  CHECK((a.transpose() - b).cwiseAbs().maxCoeff() == 0.0);
  // column sums of the adjoint re-add the zero row sums in a different
  // order, so they vanish only to rounding
  CHECK(b.colwise().sum().cwiseAbs().maxCoeff() <= 1e-13);

  // duality on random fields in the unweighted site inner product
  CounterRng rng(71, 0);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd f(lat.n_sites()), g(lat.n_sites());
    for (int i = 0; i < lat.n_sites(); ++i) {
      f[i] = 2.0 * rng.uniform() - 1.0;
      g[i] = 2.0 * rng.uniform() - 1.0;
    }
    const double lhs = lap.apply(f).dot(g);
    const double rhs = f.dot(adj.apply(g));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("symmetric jump law makes the adjoint equal the laplacian") {
  // 4-cycle with p = 1/2 both ways and uniform h: the operator is
  // symmetric, so the transpose is entrywise identical
  Lattice lat = manual_lattice(
      2, 0.5, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}},
      {{1, 2}, {0, 3}, {0, 3}, {1, 2}},
      {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  const Eigen::MatrixXd a = Eigen::MatrixXd(discrete_laplacian(lat).matrix());
  const Eigen::MatrixXd b = Eigen::MatrixXd(adjoint_laplacian(lat).matrix());
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lattice export round-trips bit-exactly") {
  const Lattice lat =
      build_lattice(DomainSpec::disc({0, 0, 0}, 1.0, 2), 0.125);
  std::ostringstream first;
  export_lattice(lat, first);
  std::istringstream in(first.str());
  const Lattice back = import_lattice(in);
  std::ostringstream second;
  export_lattice(back, second);
  CHECK(first.str() == second.str());

  CHECK(back.n_sites() == lat.n_sites());
  CHECK_FALSE(back.has_normals);
  for (int i = 0; i < lat.n_sites(); ++i) {
    CHECK(back.coords[i] == lat.coords[i]);
    CHECK(back.holding[i] == lat.holding[i]);
    REQUIRE(back.neighbors[i] == lat.neighbors[i]);
    for (std::size_t j = 0; j < lat.jump_prob[i].size(); ++j)
      CHECK(back.jump_prob[i][j] == lat.jump_prob[i][j]);
  }
  // operators rebuilt from the imported lattice are identical
  const Eigen::MatrixXd a = Eigen::MatrixXd(discrete_laplacian(lat).matrix());
  const Eigen::MatrixXd b = Eigen::MatrixXd(discrete_laplacian(back).matrix());
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("malformed lattice text is rejected") {
  std::istringstream in("this is not a lattice file\n");
  CHECK_THROWS_AS(import_lattice(in), LatticeError);
}
