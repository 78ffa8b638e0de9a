#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <vector>

#include "abrw/lattice.hpp"

namespace abrw {

// Generator matrix in compressed row form with the diagonal held separately.
// The diagonal of row x is constructed as minus the sum of that row's stored
// off-diagonals (in storage order), so row_sum() of a laplacian-tagged
// operator is exactly 0.0 in floating point, and apply() kills constants
// exactly (it uses the difference form sum_y v_xy (f_y - f_x)).
struct LinearOperator {
  enum class Tag { laplacian, adjoint };

  Tag tag = Tag::laplacian;
  int n = 0;
  std::vector<int> row_ptr;  // size n + 1
  std::vector<int> col;      // off-diagonal column indices, ascending per row
  std::vector<double> val;   // off-diagonal values
  Eigen::VectorXd diag;

  Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
  double row_sum(int i) const;  // off-diagonals in storage order, diagonal last
  Eigen::SparseMatrix<double> matrix() const;  // assembled including diagonal
};

// (Lf)(x) = h(x)^-1 sum_y p_xy (f(y) - f(x)); off-diagonal (x,y) = h(x)^-1 p_xy
LinearOperator discrete_laplacian(const Lattice& lat);

// exact transpose of discrete_laplacian (forward generator on densities)
LinearOperator adjoint_laplacian(const Lattice& lat);

}  // namespace abrw
