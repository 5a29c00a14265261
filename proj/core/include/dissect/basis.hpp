#pragma once

#include "dissect/types.hpp"

#include <string>

namespace dissect {

enum class BasisConstruction { TopologicalSelection, NumericSelection, NumericNullspace };

std::string to_string(BasisConstruction c);

/// Kernel basis of a target matrix together with a complement, so that
/// `[complement kernel]` is square and invertible.
struct Basis {
  Matrix kernel;
  Matrix complement;
  BasisConstruction construction = BasisConstruction::NumericNullspace;

  Index dimension() const { return kernel.rows(); }
  Matrix stacked() const;  // [complement kernel]
  double condition() const;
};

/// Orthonormal kernel and orthonormal complement from a column-pivoted QR
/// of the transpose, with rank decided by the relative threshold `tol`.
Basis nullspace_basis(const Matrix& target, double tol = 1e-10);

/// Like nullspace_basis, but returns 0/+-1 selection-style matrices when the
/// kernel admits them: kernel columns in reverse column-echelon form and a
/// complement made of identity columns at the non-pivot rows.
Basis preferred_basis(const Matrix& target, double tol = 1e-10);

/// Reduces the columns of `span` to reverse column-echelon form. Sets `ok`
/// to false when the result is not a 0/+-1 matrix.
Basis selection_from_span(const Matrix& span, double tol, bool& ok);

/// Coordinates of `x` in the split basis: solves [complement kernel] c = x.
struct SplitCoordinates {
  Vector complement_part;
  Vector kernel_part;
};

class Splitter {
 public:
  Splitter() = default;
  explicit Splitter(const Basis& basis);

  SplitCoordinates split(const Vector& x) const;
  Vector combine(const Vector& complement_part, const Vector& kernel_part) const;
  const Matrix& inverse() const { return inverse_; }

 private:
  Matrix complement_;
  Matrix kernel_;
  Matrix inverse_;
};

/// Largest absolute entry of target * kernel relative to the largest entry of target.
double kernel_residual(const Matrix& target, const Matrix& kernel);

double min_singular_value(const Matrix& a);

}  // namespace dissect
