#include "dissect/basis.hpp"

#include "dissect/errors.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace dissect {

std::string to_string(BasisConstruction c) {
  switch (c) {
    case BasisConstruction::TopologicalSelection:
      return "topological-selection";
    case BasisConstruction::NumericSelection:
      return "numeric-selection";
    case BasisConstruction::NumericNullspace:
      return "numeric-nullspace";
  }
  return "unknown";
}

Matrix Basis::stacked() const {
  Matrix s(dimension(), complement.cols() + kernel.cols());
  s << complement, kernel;
  return s;
}

double Basis::condition() const {
  const Matrix s = stacked();
  if (s.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(s);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
}

Basis nullspace_basis(const Matrix& target, double tol) {
  const Index n = target.cols();
  Basis b;
  b.construction = BasisConstruction::NumericNullspace;
  if (target.rows() == 0 || n == 0 || target.cwiseAbs().maxCoeff() == 0.0) {
    b.kernel = Matrix::Identity(n, n);
    b.complement = Matrix::Zero(n, 0);
    return b;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(target.transpose());
  qr.setThreshold(tol);
  const Index rank = qr.rank();
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  b.complement = q.leftCols(rank);
  b.kernel = q.rightCols(n - rank);
  return b;
}

Basis selection_from_span(const Matrix& span, double tol, bool& ok) {
  const Index n = span.rows();
  const Index q = span.cols();
  Matrix rows = span.transpose();
  std::vector<Index> pivots;
  Index next = 0;
  const double scale = std::max(1.0, rows.size() ? rows.cwiseAbs().maxCoeff() : 1.0);
  for (Index col = n - 1; col >= 0 && next < q; --col) {
    Index best = next;
    double best_abs = 0.0;
    for (Index r = next; r < q; ++r) {
      if (std::abs(rows(r, col)) > best_abs) {
        best_abs = std::abs(rows(r, col));
        best = r;
      }
    }
    if (best_abs <= tol * scale) continue;
    rows.row(next).swap(rows.row(best));
    rows.row(next) /= rows(next, col);
    for (Index r = 0; r < q; ++r) {
      if (r != next && rows(r, col) != 0.0) rows.row(r) -= rows(r, col) * rows.row(next);
    }
    pivots.push_back(col);
    ++next;
  }
  ok = next == q;
  for (Index r = 0; r < rows.rows(); ++r) {
    for (Index c = 0; c < n; ++c) {
      const double snapped = std::round(rows(r, c));
      if (std::abs(rows(r, c) - snapped) <= 1e-12) rows(r, c) = snapped;
      if (rows(r, c) != 0.0 && std::abs(rows(r, c)) != 1.0) ok = false;
    }
  }
  Basis b;
  b.construction = BasisConstruction::NumericSelection;
  if (!ok) return b;
  std::vector<Index> order(pivots.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Index a, Index c) { return pivots[a] < pivots[c]; });
  b.kernel.resize(n, q);
  for (Index k = 0; k < q; ++k) b.kernel.col(k) = rows.row(order[k]).transpose();
  std::vector<bool> is_pivot(n, false);
  for (auto p : pivots) is_pivot[p] = true;
  b.complement = Matrix::Zero(n, n - q);
  Index k = 0;
  for (Index r = 0; r < n; ++r) {
    if (!is_pivot[r]) b.complement(r, k++) = 1.0;
  }
  return b;
}

Basis preferred_basis(const Matrix& target, double tol) {
  Basis numeric = nullspace_basis(target, tol);
  if (numeric.kernel.cols() == 0) {
    numeric.complement = Matrix::Identity(target.cols(), target.cols());
    numeric.construction = BasisConstruction::NumericSelection;
    return numeric;
  }
  bool ok = false;
  Basis sel = selection_from_span(numeric.kernel, 1e-9, ok);
  if (ok && kernel_residual(target, sel.kernel) <= std::max(tol, 1e-12)) return sel;
  return numeric;
}

Splitter::Splitter(const Basis& basis) : complement_(basis.complement), kernel_(basis.kernel) {
  const Matrix s = basis.stacked();
  if (s.rows() != s.cols()) throw DimensionMismatch("split basis is not square");
  if (s.size() == 0) {
    inverse_ = s;
    return;
  }
  Eigen::FullPivLU<Matrix> lu(s);
  if (!lu.isInvertible()) throw AssumptionViolation("[P Q] is singular");
  inverse_ = lu.inverse();
}

SplitCoordinates Splitter::split(const Vector& x) const {
  if (x.size() != inverse_.cols()) throw DimensionMismatch("split: wrong vector size");
  const Vector c = inverse_ * x;
  return {c.head(complement_.cols()), c.tail(kernel_.cols())};
}

Vector Splitter::combine(const Vector& complement_part, const Vector& kernel_part) const {
  if (complement_part.size() != complement_.cols() || kernel_part.size() != kernel_.cols()) {
    throw DimensionMismatch("combine: wrong part sizes");
  }
  return complement_ * complement_part + kernel_ * kernel_part;
}

double kernel_residual(const Matrix& target, const Matrix& kernel) {
  if (target.size() == 0 || kernel.size() == 0) return 0.0;
  const double scale = target.cwiseAbs().maxCoeff();
  const double r = (target * kernel).cwiseAbs().maxCoeff();
  return scale > 0.0 ? r / scale : r;
}

double min_singular_value(const Matrix& a) {
  if (a.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues().minCoeff();
}

}  // namespace dissect
