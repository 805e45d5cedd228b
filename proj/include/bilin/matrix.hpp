#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <vector>

#include "bilin/errors.hpp"

namespace bilin {

using Vector = std::vector<double>;

// Dense row-major matrix of 64-bit reals. The single numeric currency of the
// library; every weight, spectrum and mask is one of these.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_)
      throw InvalidInput("Matrix: entry count does not match rows*cols");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw InvalidInput("Matrix: ragged initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  Vector row_copy(std::size_t i) const {
    return Vector(row(i), row(i) + cols_);
  }
  void set_row(std::size_t i, const Vector& v) {
    if (v.size() != cols_) throw InvalidInput("set_row: length mismatch");
    std::copy(v.begin(), v.end(), row(i));
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  Vector data_;
};

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

namespace detail {

// Packing-based blocked GEMM. Register tile chosen for the AVX-512 dual-FMA
// machines this was tuned on; plain C++ so any target stays correct.
constexpr int kMR = 6;
constexpr int kNR = 24;
constexpr int kKC = 256;
constexpr int kMC = 96;
constexpr int kNC = 480;

inline void micro_kernel(int k, const double* __restrict a, const double* __restrict b,
                         double* __restrict c, std::size_t ldc, int mr, int nr) {
  double acc[kMR][kNR] = {};
  if (mr == kMR && nr == kNR) {
    for (int p = 0; p < k; ++p) {
      const double* bp = b + std::size_t(p) * kNR;
      const double* ap = a + std::size_t(p) * kMR;
      for (int i = 0; i < kMR; ++i) {
        double ai = ap[i];
        for (int j = 0; j < kNR; ++j) acc[i][j] += ai * bp[j];
      }
    }
    for (int i = 0; i < kMR; ++i)
      for (int j = 0; j < kNR; ++j) c[std::size_t(i) * ldc + j] += acc[i][j];
    return;
  }
  for (int p = 0; p < k; ++p) {
    const double* bp = b + std::size_t(p) * kNR;
    const double* ap = a + std::size_t(p) * kMR;
    for (int i = 0; i < mr; ++i) {
      double ai = ap[i];
      for (int j = 0; j < nr; ++j) acc[i][j] += ai * bp[j];
    }
  }
  for (int i = 0; i < mr; ++i)
    for (int j = 0; j < nr; ++j) c[std::size_t(i) * ldc + j] += acc[i][j];
}

// op(A) block starting at (row0, col0), size mc x kc, packed in MR-row panels.
inline void pack_a(const Matrix& a, bool trans_a, std::size_t row0, std::size_t col0,
                   int mc, int kc, double* buf) {
  for (int i0 = 0; i0 < mc; i0 += kMR) {
    int mr = std::min(kMR, mc - i0);
    for (int p = 0; p < kc; ++p)
      for (int i = 0; i < kMR; ++i) {
        double v = 0.0;
        if (i < mr) {
          std::size_t r = row0 + std::size_t(i0 + i), c = col0 + std::size_t(p);
          v = trans_a ? a(c, r) : a(r, c);
        }
        *buf++ = v;
      }
  }
}

inline void pack_b(const Matrix& b, bool trans_b, std::size_t row0, std::size_t col0,
                   int kc, int nc, double* buf) {
  for (int j0 = 0; j0 < nc; j0 += kNR) {
    int nr = std::min(kNR, nc - j0);
    for (int p = 0; p < kc; ++p)
      for (int j = 0; j < kNR; ++j) {
        double v = 0.0;
        if (j < nr) {
          std::size_t r = row0 + std::size_t(p), c = col0 + std::size_t(j0 + j);
          v = trans_b ? b(c, r) : b(r, c);
        }
        *buf++ = v;
      }
  }
}

// C += op(A) * op(B); fixed blocking and accumulation order, so results are
// reproducible run to run for identical shapes.
inline void gemm_acc(Matrix& c, const Matrix& a, bool trans_a, const Matrix& b, bool trans_b) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb || c.rows() != m || c.cols() != n)
    throw InvalidInput("gemm: incompatible shapes");

  thread_local std::vector<double> abuf, bbuf;
  abuf.resize(std::size_t(kMC + kMR) * kKC);
  bbuf.resize(std::size_t(kKC) * (kNC + kNR));

  for (std::size_t jc = 0; jc < n; jc += kNC) {
    int nc = int(std::min<std::size_t>(kNC, n - jc));
    for (std::size_t pc = 0; pc < k; pc += kKC) {
      int kc = int(std::min<std::size_t>(kKC, k - pc));
      pack_b(b, trans_b, pc, jc, kc, nc, bbuf.data());
      for (std::size_t ic = 0; ic < m; ic += kMC) {
        int mc = int(std::min<std::size_t>(kMC, m - ic));
        pack_a(a, trans_a, ic, pc, mc, kc, abuf.data());
        for (int jr = 0; jr < nc; jr += kNR) {
          int nr = std::min(kNR, nc - jr);
          for (int ir = 0; ir < mc; ir += kMR) {
            int mr = std::min(kMR, mc - ir);
            micro_kernel(kc, abuf.data() + std::size_t(ir) * kc,
                         bbuf.data() + std::size_t(jr) * kc,
                         c.row(ic + ir) + jc + jr, c.cols(), mr, nr);
          }
        }
      }
    }
  }
}

}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  detail::gemm_acc(c, a, false, b, false);
  return c;
}

// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.rows());
  detail::gemm_acc(c, a, false, b, true);
  return c;
}

// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  detail::gemm_acc(c, a, true, b, false);
  return c;
}

// Sequential row-dot products, strictly left-to-right accumulation. The
// per-example forward pass depends on this exact order.
inline Vector matvec(const Matrix& a, const Vector& x) {
  if (x.size() != a.cols()) throw InvalidInput("matvec: length mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* r = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

// a^T * x
inline Vector matvec_t(const Matrix& a, const Vector& x) {
  if (x.size() != a.rows()) throw InvalidInput("matvec_t: length mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    const double* r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

inline double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InvalidInput("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

inline double norm1(const Vector& v) {
  double acc = 0.0;
  for (double x : v) acc += std::fabs(x);
  return acc;
}

inline double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * a.data()[i];
  return std::sqrt(acc);
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput("frobenius_distance: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("matrix +: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("matrix -: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
  return c;
}

inline Matrix symmetric_part(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInput("symmetric_part: matrix not square");
  Matrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

inline Matrix antisymmetric_part(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInput("antisymmetric_part: matrix not square");
  Matrix s(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) - a(j, i));
  return s;
}

// x^T A y, row-wise accumulation
inline double quadratic_form(const Matrix& a, const Vector& x, const Vector& y) {
  if (x.size() != a.rows() || y.size() != a.cols())
    throw InvalidInput("quadratic_form: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* r = a.row(i);
    double rowacc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) rowacc += r[j] * y[j];
    acc += x[i] * rowacc;
  }
  return acc;
}

}  // namespace bilin
