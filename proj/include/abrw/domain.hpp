#pragma once

#include <Eigen/Dense>

#include <functional>

namespace abrw {

// Bounded domain in d = 2 or 3 dimensions. Points are padded to 3 components;
// coordinates at index >= dim are ignored and kept at zero.
struct DomainSpec {
  enum class Kind { rectangle, disc, implicit };

  Kind kind = Kind::rectangle;
  int dim = 2;
  Eigen::Vector3d extent = Eigen::Vector3d::Zero();  // rectangle side lengths
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // disc center
  double radius = 0.0;
  // implicit domains: negative inside, positive outside
  std::function<double(const Eigen::Vector3d&)> sdist_fn;
  Eigen::Vector3d box_lo = Eigen::Vector3d::Zero();  // bounding box
  Eigen::Vector3d box_hi = Eigen::Vector3d::Zero();

  static DomainSpec rectangle(double a, double b);
  static DomainSpec rectangle(double a, double b, double c);
  static DomainSpec disc(const Eigen::Vector3d& center, double radius, int dim);
  static DomainSpec implicit(std::function<double(const Eigen::Vector3d&)> sdist,
                             const Eigen::Vector3d& box_lo,
                             const Eigen::Vector3d& box_hi, int dim);

  // negative inside, positive outside, zero on the boundary
  double signed_distance(const Eigen::Vector3d& x) const;

  bool contains(const Eigen::Vector3d& x, double tol = 0.0) const {
    return signed_distance(x) <= tol;
  }
};

struct BoundaryPoint {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d inward_normal = Eigen::Vector3d::Zero();  // unit length
};

// Nearest boundary point to x (x inside or on the boundary) and the inward
// unit normal there. Rectangle ties (several faces equidistant) resolve to the
// angle bisector of the tied faces. Implicit domains use a damped projection
// along the numerical gradient of the signed-distance evaluator; throws if the
// search does not reach |sdist| <= 1e-10 * scale.
BoundaryPoint nearest_boundary_normal(const DomainSpec& dom,
                                      const Eigen::Vector3d& x);

}  // namespace abrw
