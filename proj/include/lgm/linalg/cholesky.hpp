#pragma once

#include <cmath>

#include "lgm/linalg/matrix.hpp"

namespace lgm {

// Relative pivot floor shared by the dense factorizations.
inline constexpr double kPivotTolerance = 1e-14;

// Lower Cholesky factor of a symmetric positive definite matrix.  Only the
// lower triangle of `a` is read.  A pivot at or below
// kPivotTolerance * max diagonal entry raises NotPositiveDefiniteError with
// the failing index.
inline Matrix cholesky(const Matrix& a) {
  check_square(a, "cholesky");
  int n = a.rows();
  double max_diag = 0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(a(i, i)));
  double floor = kPivotTolerance * max_diag;
  Matrix l(n, n);
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > floor)) throw NotPositiveDefiniteError(j);
    double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

// log det(L Lᵀ) from a lower Cholesky factor.
inline double log_det_chol(const Matrix& l) {
  double s = 0;
  for (int i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

enum class Triangle { Lower, Upper };
enum class Transpose { No, Yes };

// Solves T x = b (or Tᵀ x = b) for a triangular T by substitution.  The
// opposite triangle of T is never read, so factor storage can share one
// square matrix.  No inverse is ever formed.
inline Vector tri_solve(const Matrix& t, const Vector& b, Triangle tri,
                        Transpose trans = Transpose::No) {
  check_square(t, "tri_solve");
  int n = t.rows();
  check_dim(static_cast<int>(b.size()) == n, "tri_solve rhs");
  // Transposing flips which triangle is effectively traversed.
  bool forward = (tri == Triangle::Lower) == (trans == Transpose::No);
  Vector x = b;
  if (forward) {
    for (int i = 0; i < n; ++i) {
      double s = x[i];
      for (int k = 0; k < i; ++k)
        s -= (trans == Transpose::No ? t(i, k) : t(k, i)) * x[k];
      x[i] = s / t(i, i);
    }
  } else {
    for (int i = n - 1; i >= 0; --i) {
      double s = x[i];
      for (int k = i + 1; k < n; ++k)
        s -= (trans == Transpose::No ? t(i, k) : t(k, i)) * x[k];
      x[i] = s / t(i, i);
    }
  }
  return x;
}

// Column-wise triangular solve with a matrix right-hand side.
inline Matrix tri_solve(const Matrix& t, const Matrix& b, Triangle tri,
                        Transpose trans = Transpose::No) {
  check_square(t, "tri_solve");
  int n = t.rows();
  check_dim(b.rows() == n, "tri_solve rhs rows");
  bool forward = (tri == Triangle::Lower) == (trans == Transpose::No);
  Matrix x = b;
  if (forward) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < i; ++k) {
        double tik = (trans == Transpose::No ? t(i, k) : t(k, i));
        if (tik == 0.0) continue;
        for (int j = 0; j < b.cols(); ++j) x(i, j) -= tik * x(k, j);
      }
      double tii = t(i, i);
      for (int j = 0; j < b.cols(); ++j) x(i, j) /= tii;
    }
  } else {
    for (int i = n - 1; i >= 0; --i) {
      for (int k = i + 1; k < n; ++k) {
        double tik = (trans == Transpose::No ? t(i, k) : t(k, i));
        if (tik == 0.0) continue;
        for (int j = 0; j < b.cols(); ++j) x(i, j) -= tik * x(k, j);
      }
      double tii = t(i, i);
      for (int j = 0; j < b.cols(); ++j) x(i, j) /= tii;
    }
  }
  return x;
}

// Blockwise square root of a symmetric positive semi-definite block
// diagonal: returns lower-triangular blocks S with S Sᵀ equal to the input
// blockwise.  Block size 1 takes the scalar square root directly (zero
// allowed); larger blocks use their Cholesky factor as the root
// representative and therefore require strict positive definiteness.
// Failure raises NotPositiveDefiniteError carrying the global coordinate of
// the offending diagonal entry.
inline BlockDiagonal block_sqrt(const BlockDiagonal& w) {
  int m = w.block_size();
  BlockDiagonal s(w.dim(), m);
  if (m == 1) {
    for (int b = 0; b < w.blocks(); ++b) {
      double v = w.at(b, 0, 0);
      if (v < 0.0) throw NotPositiveDefiniteError(b);
      s.at(b, 0, 0) = std::sqrt(v);
    }
    return s;
  }
  for (int b = 0; b < w.blocks(); ++b) {
    Matrix block(m, m);
    double scale = 0.0;
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) {
        block(r, c) = w.at(b, r, c);
        scale = std::max(scale, std::fabs(block(r, c)));
      }
    // Semidefinite-tolerant lower root: a pivot at zero zeroes its column
    // (legal for merely positive SEMI-definite blocks, where that column
    // must vanish too); a negative pivot or a nonzero column under a zero
    // pivot means the block is indefinite.
    double floor = kPivotTolerance * scale;
    Matrix l(m, m);
    for (int j = 0; j < m; ++j) {
      double d = block(j, j);
      for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
      if (d < -floor) throw NotPositiveDefiniteError(b * m + j);
      if (d > floor) {
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < m; ++i) {
          double v = block(i, j);
          for (int k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
          l(i, j) = v / l(j, j);
        }
      } else {
        for (int i = j + 1; i < m; ++i) {
          double v = block(i, j);
          for (int k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
          if (std::fabs(v) > std::sqrt(floor * scale) + floor)
            throw NotPositiveDefiniteError(b * m + j);
        }
      }
    }
    for (int r = 0; r < m; ++r)
      for (int c = 0; c <= r; ++c) s.at(b, r, c) = l(r, c);
  }
  return s;
}

}  // namespace lgm
