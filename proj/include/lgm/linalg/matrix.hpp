#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "lgm/errors.hpp"

namespace lgm {

using Vector = std::vector<double>;

// Dense row-major matrix over an arbitrary scalar.  The element type is a
// template parameter so covariance kernels can be evaluated on recording
// scalars; all factorization routines operate on MatrixT<double> only.
template <class S>
class MatrixT {
public:
  MatrixT() : rows_(0), cols_(0) {}
  MatrixT(int rows, int cols)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * cols, S{}) {}
  MatrixT(int rows, int cols, std::initializer_list<S> values)
      : rows_(rows), cols_(cols), data_(values) {
    if (static_cast<int>(data_.size()) != rows * cols)
      throw ContractError("matrix initializer size mismatch");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  S& operator()(int i, int j) {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  const S& operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }

  std::vector<S>& data() { return data_; }
  const std::vector<S>& data() const { return data_; }

  static MatrixT identity(int n) {
    MatrixT m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = S{1};
    return m;
  }

private:
  int rows_, cols_;
  std::vector<S> data_;
};

using Matrix = MatrixT<double>;

inline void check_square(const Matrix& a, const char* who) {
  if (a.rows() != a.cols())
    throw ContractError(std::string(who) + ": matrix must be square");
}

inline void check_dim(bool ok, const char* what) {
  if (!ok) throw ContractError(std::string("dimension mismatch: ") + what);
}

inline double dot(const Vector& a, const Vector& b) {
  check_dim(a.size() == b.size(), "dot");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_inf(const Vector& a) {
  double m = 0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

inline Vector operator+(const Vector& a, const Vector& b) {
  check_dim(a.size() == b.size(), "vector +");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vector operator-(const Vector& a, const Vector& b) {
  check_dim(a.size() == b.size(), "vector -");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vector operator*(double c, const Vector& a) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = c * a[i];
  return r;
}

inline Vector matvec(const Matrix& a, const Vector& x) {
  check_dim(a.cols() == static_cast<int>(x.size()), "matvec");
  Vector y(a.rows(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// yᵀA for symmetric use sites; returns Aᵀx.
inline Vector matvec_transposed(const Matrix& a, const Vector& x) {
  check_dim(a.rows() == static_cast<int>(x.size()), "matvec_transposed");
  Vector y(a.cols(), 0.0);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) y[j] += a(i, j) * x[i];
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  check_dim(a.cols() == b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// C = AᵀA, the Gram product every factor-and-reuse formula ends in.
inline Matrix gram(const Matrix& a) {
  Matrix c(a.cols(), a.cols());
  for (int k = 0; k < a.rows(); ++k)
    for (int i = 0; i < a.cols(); ++i) {
      double aki = a(k, i);
      if (aki == 0.0) continue;
      for (int j = 0; j < a.cols(); ++j) c(i, j) += aki * a(k, j);
    }
  return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  check_dim(a.rows() == b.rows() && a.cols() == b.cols(), "matrix -");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    c.data()[i] = a.data()[i] - b.data()[i];
  return c;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  check_dim(a.rows() == b.rows() && a.cols() == b.cols(), "matrix +");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    c.data()[i] = a.data()[i] + b.data()[i];
  return c;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    c.data()[i] = s * a.data()[i];
  return c;
}

inline double max_abs(const Matrix& a) {
  double m = 0;
  for (double v : a.data()) m = std::max(m, std::fabs(v));
  return m;
}

// Symmetric block-diagonal matrix with uniform block size m.  Used for the
// negative Hessian W of a likelihood whose observations couple at most m
// consecutive latent coordinates.  Blocks are stored row-major back to back;
// m = 1 degenerates to a plain diagonal.
class BlockDiagonal {
public:
  BlockDiagonal() : n_(0), m_(1) {}
  BlockDiagonal(int n, int m) : n_(n), m_(m) {
    if (m < 1 || n < 0 || (m > 0 && n % m != 0))
      throw ContractError("block size must divide dimension");
    data_.assign(static_cast<std::size_t>(n) * m, 0.0);
  }

  int dim() const { return n_; }
  int block_size() const { return m_; }
  int blocks() const { return m_ == 0 ? 0 : n_ / m_; }

  double& at(int block, int r, int c) {
    return data_[(static_cast<std::size_t>(block) * m_ + r) * m_ + c];
  }
  double at(int block, int r, int c) const {
    return data_[(static_cast<std::size_t>(block) * m_ + r) * m_ + c];
  }

  // Entry (i, j) of the dense equivalent; zero outside the diagonal blocks.
  double entry(int i, int j) const {
    if (i / m_ != j / m_) return 0.0;
    return at(i / m_, i % m_, j % m_);
  }

  Vector matvec(const Vector& x) const {
    check_dim(static_cast<int>(x.size()) == n_, "block matvec");
    Vector y(n_, 0.0);
    for (int b = 0; b < blocks(); ++b)
      for (int r = 0; r < m_; ++r) {
        double s = 0;
        for (int c = 0; c < m_; ++c) s += at(b, r, c) * x[b * m_ + c];
        y[b * m_ + r] = s;
      }
    return y;
  }

  // xᵀ from the left: returns Bᵀx.
  Vector matvec_transposed(const Vector& x) const {
    check_dim(static_cast<int>(x.size()) == n_, "block matvec_transposed");
    Vector y(n_, 0.0);
    for (int b = 0; b < blocks(); ++b)
      for (int c = 0; c < m_; ++c) {
        double s = 0;
        for (int r = 0; r < m_; ++r) s += at(b, r, c) * x[b * m_ + r];
        y[b * m_ + c] = s;
      }
    return y;
  }

  Matrix to_dense() const {
    Matrix d(n_, n_);
    for (int b = 0; b < blocks(); ++b)
      for (int r = 0; r < m_; ++r)
        for (int c = 0; c < m_; ++c) d(b * m_ + r, b * m_ + c) = at(b, r, c);
    return d;
  }

  BlockDiagonal transposed() const {
    BlockDiagonal t(n_, m_);
    for (int b = 0; b < blocks(); ++b)
      for (int r = 0; r < m_; ++r)
        for (int c = 0; c < m_; ++c) t.at(b, c, r) = at(b, r, c);
    return t;
  }

  double max_abs_offdiag_asymmetry() const {
    double worst = 0;
    for (int b = 0; b < blocks(); ++b)
      for (int r = 0; r < m_; ++r)
        for (int c = 0; c < r; ++c)
          worst = std::max(worst, std::fabs(at(b, r, c) - at(b, c, r)));
    return worst;
  }

private:
  int n_, m_;
  std::vector<double> data_;
};

// D·A for block-diagonal D and dense A.
inline Matrix bd_mul_dense(const BlockDiagonal& d, const Matrix& a) {
  check_dim(d.dim() == a.rows(), "bd_mul_dense");
  int m = d.block_size();
  Matrix c(a.rows(), a.cols());
  for (int b = 0; b < d.blocks(); ++b)
    for (int r = 0; r < m; ++r)
      for (int k = 0; k < m; ++k) {
        double v = d.at(b, r, k);
        if (v == 0.0) continue;
        for (int j = 0; j < a.cols(); ++j) c(b * m + r, j) += v * a(b * m + k, j);
      }
  return c;
}

// A·D for dense A and block-diagonal D.
inline Matrix dense_mul_bd(const Matrix& a, const BlockDiagonal& d) {
  check_dim(a.cols() == d.dim(), "dense_mul_bd");
  int m = d.block_size();
  Matrix c(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int b = 0; b < d.blocks(); ++b)
      for (int k = 0; k < m; ++k) {
        double v = a(i, b * m + k);
        if (v == 0.0) continue;
        for (int j = 0; j < m; ++j) c(i, b * m + j) += v * d.at(b, k, j);
      }
  return c;
}

}  // namespace lgm
