#include "abrw/operators.hpp"

#include <algorithm>
#include <numeric>

namespace abrw {

Eigen::VectorXd LinearOperator::apply(const Eigen::VectorXd& f) const {
  Eigen::VectorXd out(n);
  if (tag == Tag::laplacian) {
    // difference form: exact zero on constant inputs
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e)
        acc += val[e] * (f[col[e]] - f[i]);
      out[i] = acc;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      double acc = diag[i] * f[i];
      for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e) acc += val[e] * f[col[e]];
      out[i] = acc;
    }
  }
  return out;
}

double LinearOperator::row_sum(int i) const {
  double acc = 0.0;
  for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e) acc += val[e];
  return acc + diag[i];
}

Eigen::SparseMatrix<double> LinearOperator::matrix() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(col.size() + n);
  for (int i = 0; i < n; ++i) {
    for (int e = row_ptr[i]; e < row_ptr[i + 1]; ++e)
      trips.emplace_back(i, col[e], val[e]);
    trips.emplace_back(i, i, diag[i]);
  }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

LinearOperator discrete_laplacian(const Lattice& lat) {
  LinearOperator op;
  op.tag = LinearOperator::Tag::laplacian;
  op.n = lat.n_sites();
  op.row_ptr.assign(op.n + 1, 0);
  op.diag.resize(op.n);
  for (int x = 0; x < op.n; ++x) {
    const double hinv = 1.0 / lat.holding[x];
    double rowsum = 0.0;
    for (std::size_t j = 0; j < lat.neighbors[x].size(); ++j) {
      op.col.push_back(lat.neighbors[x][j]);
      const double v = hinv * lat.jump_prob[x][j];
      op.val.push_back(v);
      rowsum += v;
    }
    op.diag[x] = -rowsum;  // exact cancellation against the stored entries
    op.row_ptr[x + 1] = static_cast<int>(op.col.size());
  }
  return op;
}

LinearOperator adjoint_laplacian(const Lattice& lat) {
  const LinearOperator fwd = discrete_laplacian(lat);
  LinearOperator op;
  op.tag = LinearOperator::Tag::adjoint;
  op.n = fwd.n;
  op.diag = fwd.diag;  // transposition fixes the diagonal

  // transpose the off-diagonal pattern; columns stay ascending because rows are
  std::vector<int> count(op.n, 0);
  for (int c : fwd.col) ++count[c];
  op.row_ptr.assign(op.n + 1, 0);
  for (int i = 0; i < op.n; ++i) op.row_ptr[i + 1] = op.row_ptr[i] + count[i];
  op.col.resize(fwd.col.size());
  op.val.resize(fwd.val.size());
  std::vector<int> cursor(op.row_ptr.begin(), op.row_ptr.end() - 1);
  for (int i = 0; i < fwd.n; ++i) {
    for (int e = fwd.row_ptr[i]; e < fwd.row_ptr[i + 1]; ++e) {
      const int j = fwd.col[e];
      op.col[cursor[j]] = i;
      op.val[cursor[j]] = fwd.val[e];
      ++cursor[j];
    }
  }
  return op;
}

}  // namespace abrw
