#include "abrw/domain.hpp"

#include <cmath>
#include <stdexcept>

namespace abrw {

DomainSpec DomainSpec::rectangle(double a, double b) {
  if (a <= 0 || b <= 0) throw std::invalid_argument("rectangle: sides must be positive");
  DomainSpec d;
  d.kind = Kind::rectangle;
  d.dim = 2;
  d.extent = Eigen::Vector3d(a, b, 0.0);
  d.box_lo = Eigen::Vector3d::Zero();
  d.box_hi = d.extent;
  return d;
}

DomainSpec DomainSpec::rectangle(double a, double b, double c) {
  if (a <= 0 || b <= 0 || c <= 0)
    throw std::invalid_argument("rectangle: sides must be positive");
  DomainSpec d;
  d.kind = Kind::rectangle;
  d.dim = 3;
  d.extent = Eigen::Vector3d(a, b, c);
  d.box_lo = Eigen::Vector3d::Zero();
  d.box_hi = d.extent;
  return d;
}

DomainSpec DomainSpec::disc(const Eigen::Vector3d& center, double radius, int dim) {
  if (radius <= 0) throw std::invalid_argument("disc: radius must be positive");
  if (dim != 2 && dim != 3) throw std::invalid_argument("disc: dim must be 2 or 3");
  DomainSpec d;
  d.kind = Kind::disc;
  d.dim = dim;
  d.center = center;
  if (dim == 2) d.center.z() = 0.0;
  d.radius = radius;
  d.box_lo = d.center - Eigen::Vector3d::Constant(radius);
  d.box_hi = d.center + Eigen::Vector3d::Constant(radius);
  if (dim == 2) d.box_lo.z() = d.box_hi.z() = 0.0;
  return d;
}

DomainSpec DomainSpec::implicit(std::function<double(const Eigen::Vector3d&)> sdist,
                                const Eigen::Vector3d& box_lo,
                                const Eigen::Vector3d& box_hi, int dim) {
  if (!sdist) throw std::invalid_argument("implicit: evaluator must be callable");
  if (dim != 2 && dim != 3) throw std::invalid_argument("implicit: dim must be 2 or 3");
  DomainSpec d;
  d.kind = Kind::implicit;
  d.dim = dim;
  d.sdist_fn = std::move(sdist);
  d.box_lo = box_lo;
  d.box_hi = box_hi;
  if (dim == 2) d.box_lo.z() = d.box_hi.z() = 0.0;
  return d;
}

double DomainSpec::signed_distance(const Eigen::Vector3d& x) const {
  switch (kind) {
    case Kind::rectangle: {
      // signed distance to the box [0, extent]; exact for points inside
      double inside = -std::numeric_limits<double>::infinity();
      double out2 = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double q = std::max(-x[i], x[i] - extent[i]);
        if (q > 0) out2 += q * q;
        inside = std::max(inside, q);
      }
      return out2 > 0 ? std::sqrt(out2) : inside;
    }
    case Kind::disc: {
      Eigen::Vector3d r = x - center;
      if (dim == 2) r.z() = 0.0;
      return r.norm() - radius;
    }
    case Kind::implicit:
      return sdist_fn(x);
  }
  throw std::logic_error("unreachable");
}

namespace {

Eigen::Vector3d fd_gradient(const DomainSpec& dom, const Eigen::Vector3d& y,
                            double step) {
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  for (int i = 0; i < dom.dim; ++i) {
    Eigen::Vector3d hi = y, lo = y;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (dom.signed_distance(hi) - dom.signed_distance(lo)) / (2 * step);
  }
  return g;
}

BoundaryPoint rectangle_nearest(const DomainSpec& dom, const Eigen::Vector3d& x) {
  // distances to the 2d faces; the site is inside, so all are >= 0
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dom.dim; ++i)
    best = std::min({best, x[i], dom.extent[i] - x[i]});
  if (best < 0) throw std::invalid_argument("nearest_boundary_normal: point outside domain");

  const double tie_tol = 1e-9 * dom.extent.head(dom.dim).maxCoeff();
  BoundaryPoint bp;
  bp.point = x;
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  for (int i = 0; i < dom.dim; ++i) {
    if (x[i] - best <= tie_tol) {
      bp.point[i] = 0.0;
      n[i] += 1.0;  // inward normal of the low face
    } else if ((dom.extent[i] - x[i]) - best <= tie_tol) {
      bp.point[i] = dom.extent[i];
      n[i] -= 1.0;  // inward normal of the high face
    }
  }
  const double len = n.norm();
  if (len == 0.0)
    throw std::runtime_error("nearest_boundary_normal: opposing faces tie, normal undefined");
  bp.inward_normal = n / len;
  return bp;
}

BoundaryPoint disc_nearest(const DomainSpec& dom, const Eigen::Vector3d& x) {
  Eigen::Vector3d r = x - dom.center;
  if (dom.dim == 2) r.z() = 0.0;
  const double len = r.norm();
  if (len == 0.0)
    throw std::runtime_error("nearest_boundary_normal: disc center is equidistant to the whole boundary");
  BoundaryPoint bp;
  bp.inward_normal = -r / len;
  bp.point = dom.center + (dom.radius / len) * r;
  return bp;
}

BoundaryPoint implicit_nearest(const DomainSpec& dom, const Eigen::Vector3d& x) {
  const double scale =
      std::max(1.0, (dom.box_hi - dom.box_lo).head(dom.dim).norm());
  const double tol = 1e-10 * scale;
  const double fd_step = 1e-7 * scale;

  Eigen::Vector3d y = x;
  double s = dom.signed_distance(y);
  for (int iter = 0; iter < 200; ++iter) {
    if (std::abs(s) <= tol) {
      Eigen::Vector3d g = fd_gradient(dom, y, fd_step);
      const double glen = g.norm();
      if (glen == 0.0)
        throw std::runtime_error("nearest_boundary_normal: vanishing gradient at boundary");
      BoundaryPoint bp;
      bp.point = y;
      bp.inward_normal = -g / glen;
      return bp;
    }
    Eigen::Vector3d g = fd_gradient(dom, y, fd_step);
    const double g2 = g.squaredNorm();
    if (g2 == 0.0)
      throw std::runtime_error("nearest_boundary_normal: vanishing gradient during projection");
    // Newton step toward the zero level set, damped until |s| decreases
    double damp = 1.0;
    for (int back = 0; back < 30; ++back) {
      Eigen::Vector3d cand = y - damp * (s / g2) * g;
      double sc = dom.signed_distance(cand);
      if (std::abs(sc) < std::abs(s)) {
        y = cand;
        s = sc;
        break;
      }
      damp *= 0.5;
      if (back == 29)
        throw std::runtime_error("nearest_boundary_normal: projection stalled");
    }
  }
  throw std::runtime_error("nearest_boundary_normal: projection did not converge");
}

}  // namespace

BoundaryPoint nearest_boundary_normal(const DomainSpec& dom,
                                      const Eigen::Vector3d& x) {
  BoundaryPoint bp;
  switch (dom.kind) {
    case DomainSpec::Kind::rectangle: bp = rectangle_nearest(dom, x); break;
    case DomainSpec::Kind::disc: bp = disc_nearest(dom, x); break;
    case DomainSpec::Kind::implicit: bp = implicit_nearest(dom, x); break;
  }
  // exact unit length, independent of how the branch normalized
  bp.inward_normal /= bp.inward_normal.norm();
  return bp;
}

}  // namespace abrw
