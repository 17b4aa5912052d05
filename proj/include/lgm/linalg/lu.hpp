#pragma once

#include <cmath>
#include <vector>

#include "lgm/linalg/cholesky.hpp"
#include "lgm/linalg/matrix.hpp"

namespace lgm {

// Packed LU factorization with partial pivoting: P A = L U with unit
// diagonal L below the diagonal of `lu` and U on and above it.  `perm[i]`
// records the source row of eliminated row i; `sign` is det(P).
struct LuFactors {
  Matrix lu;
  std::vector<int> perm;
  int sign = 1;
};

inline LuFactors lu_decompose(Matrix a) {
  check_square(a, "lu_decompose");
  int n = a.rows();
  double floor = kPivotTolerance * max_abs(a);
  LuFactors f;
  f.perm.resize(n);
  for (int i = 0; i < n; ++i) f.perm[i] = i;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::fabs(a(k, k));
    for (int i = k + 1; i < n; ++i) {
      double v = std::fabs(a(i, k));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (!(best > floor)) throw SingularMatrixError(k);
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
      f.sign = -f.sign;
    }
    double pivot = a(k, k);
    for (int i = k + 1; i < n; ++i) {
      double l = a(i, k) / pivot;
      a(i, k) = l;
      if (l == 0.0) continue;
      for (int j = k + 1; j < n; ++j) a(i, j) -= l * a(k, j);
    }
  }
  f.lu = std::move(a);
  return f;
}

// log |det A| plus the determinant's sign, for callers that must tolerate
// a negative determinant instead of treating it as an error.
struct SignedLogDet {
  int sign = 1;
  double log_abs = 0.0;
};

inline SignedLogDet signed_log_det_lu(const LuFactors& f) {
  SignedLogDet r;
  r.sign = f.sign;
  for (int i = 0; i < f.lu.rows(); ++i) {
    double u = f.lu(i, i);
    if (u < 0) {
      r.sign = -r.sign;
      u = -u;
    }
    r.log_abs += std::log(u);
  }
  return r;
}

// log det A from LU factors.  The factored matrix must have a strictly
// positive determinant; a non-positive one raises NumericalDomainError,
// since the value would leave the log's domain.
inline double log_det_lu(const LuFactors& f) {
  SignedLogDet r = signed_log_det_lu(f);
  if (r.sign <= 0)
    throw NumericalDomainError("log_det_lu: determinant is not positive");
  return r.log_abs;
}

inline Vector lu_solve(const LuFactors& f, const Vector& b) {
  int n = f.lu.rows();
  check_dim(static_cast<int>(b.size()) == n, "lu_solve rhs");
  Vector x(n);
  for (int i = 0; i < n; ++i) x[i] = b[f.perm[i]];
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < i; ++k) x[i] -= f.lu(i, k) * x[k];
  for (int i = n - 1; i >= 0; --i) {
    for (int k = i + 1; k < n; ++k) x[i] -= f.lu(i, k) * x[k];
    x[i] /= f.lu(i, i);
  }
  return x;
}

inline Matrix lu_solve(const LuFactors& f, const Matrix& b) {
  int n = f.lu.rows();
  check_dim(b.rows() == n, "lu_solve rhs rows");
  Matrix x(n, b.cols());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < b.cols(); ++j) x(i, j) = b(f.perm[i], j);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < i; ++k) {
      double l = f.lu(i, k);
      if (l == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) x(i, j) -= l * x(k, j);
    }
  for (int i = n - 1; i >= 0; --i) {
    for (int k = i + 1; k < n; ++k) {
      double u = f.lu(i, k);
      if (u == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) x(i, j) -= u * x(k, j);
    }
    double d = f.lu(i, i);
    for (int j = 0; j < b.cols(); ++j) x(i, j) /= d;
  }
  return x;
}

}  // namespace lgm
