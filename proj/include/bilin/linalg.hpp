#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "bilin/errors.hpp"
#include "bilin/matrix.hpp"

namespace bilin {

// Ordered eigenpairs of one symmetrized interaction matrix. Eigenvectors are
// stored one per row, paired index-wise with the eigenvalues.
struct Spectrum {
  Vector eigenvalues;      // sorted descending by signed value
  Matrix eigenvectors;     // orthonormal rows
  std::string direction_label;

  std::size_t size() const { return eigenvalues.size(); }

  Matrix reconstruct() const {
    const std::size_t n = eigenvectors.cols();
    Matrix m(n, n);
    for (std::size_t i = 0; i < size(); ++i) {
      const double* v = eigenvectors.row(i);
      const double lam = eigenvalues[i];
      for (std::size_t r = 0; r < n; ++r) {
        const double lv = lam * v[r];
        for (std::size_t c = 0; c < n; ++c) m(r, c) += lv * v[c];
      }
    }
    return m;
  }
};

namespace detail {

// Flip each row so its largest-magnitude entry is non-negative; removes the
// sign ambiguity of eigenvectors and makes outputs byte-reproducible.
inline void apply_sign_convention(Matrix& vectors) {
  for (std::size_t i = 0; i < vectors.rows(); ++i) {
    double* v = vectors.row(i);
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t j = 0; j < vectors.cols(); ++j) {
      double a = std::fabs(v[j]);
      if (a > best) {
        best = a;
        arg = j;
      }
    }
    if (v[arg] < 0.0)
      for (std::size_t j = 0; j < vectors.cols(); ++j) v[j] = -v[j];
  }
}

inline double offdiag_frobenius(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) acc += a(i, j) * a(i, j);
  return std::sqrt(acc);
}

}  // namespace detail

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Off-diagonal Frobenius norm is driven below 1e-12 * ||M||_F, capped at 100
// sweeps. Eigenvalues come back sorted descending by signed value.
inline Spectrum symmetric_eig(const Matrix& m, std::string direction_label = {}) {
  if (m.rows() != m.cols()) throw InvalidInput("symmetric_eig: matrix not square");
  const std::size_t n = m.rows();
  const double scale = max_abs(m);
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      asym = std::max(asym, std::fabs(m(i, j) - m(j, i)));
  if (asym > 1e-9 * std::max(scale, 1e-300))
    throw InvalidInput("symmetric_eig: matrix is not symmetric within tolerance");

  Matrix a = symmetric_part(m);
  Matrix vecs = Matrix::identity(n);  // rows accumulate J^T products
  const double fnorm = frobenius_norm(a);
  const double target = 1e-12 * fnorm;

  if (fnorm > 0.0) {
    bool converged = false;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
      for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
          const double apq = a(p, q);
          if (apq == 0.0) continue;
          const double app = a(p, p), aqq = a(q, q);
          const double tau = (aqq - app) / (2.0 * apq);
          const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
          const double c = 1.0 / std::sqrt(1.0 + t * t);
          const double s = t * c;

          // A <- J^T A J on rows/cols p and q
          for (std::size_t k = 0; k < n; ++k) {
            const double akp = a(k, p), akq = a(k, q);
            a(k, p) = c * akp - s * akq;
            a(k, q) = s * akp + c * akq;
          }
          for (std::size_t k = 0; k < n; ++k) {
            const double apk = a(p, k), aqk = a(q, k);
            a(p, k) = c * apk - s * aqk;
            a(q, k) = s * apk + c * aqk;
          }
          // eigenvector rows transform the same way as the rows of A
          double* vp = vecs.row(p);
          double* vq = vecs.row(q);
          for (std::size_t k = 0; k < n; ++k) {
            const double xp = vp[k], xq = vq[k];
            vp[k] = c * xp - s * xq;
            vq[k] = s * xp + c * xq;
          }
        }
      }
      converged = detail::offdiag_frobenius(a) <= target;
    }
    if (!converged) throw NumericalFailure("symmetric_eig: Jacobi sweeps did not converge");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  Spectrum out;
  out.direction_label = std::move(direction_label);
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out.eigenvalues[i] = a(order[i], order[i]);
    std::copy(vecs.row(order[i]), vecs.row(order[i]) + n, out.eigenvectors.row(i));
  }
  detail::apply_sign_convention(out.eigenvectors);
  return out;
}

struct SvdResult {
  Matrix left_vectors;    // one u_i per row, length = m
  Vector singular_values; // non-negative, descending, min(m, n) entries
  Matrix right_vectors;   // one v_i per row, length = n
};

namespace detail {

// Orthonormalize `row` against previously filled rows of `basis`, writing the
// result into row `slot`. Candidates are standard basis vectors, so at least
// one survives projection.
inline void complete_orthonormal_row(Matrix& basis, std::size_t slot) {
  const std::size_t dim = basis.cols();
  for (std::size_t cand = 0; cand < dim; ++cand) {
    Vector v(dim, 0.0);
    v[cand] = 1.0;
    for (std::size_t r = 0; r < slot; ++r) {
      const double* br = basis.row(r);
      double proj = 0.0;
      for (std::size_t j = 0; j < dim; ++j) proj += br[j] * v[j];
      for (std::size_t j = 0; j < dim; ++j) v[j] -= proj * br[j];
    }
    double nrm = norm2(v);
    if (nrm > 1e-6) {
      for (std::size_t j = 0; j < dim; ++j) v[j] /= nrm;
      basis.set_row(slot, v);
      return;
    }
  }
  throw NumericalFailure("svd: failed to complete orthonormal basis");
}

}  // namespace detail

// Thin SVD computed through the symmetric eigendecomposition of the smaller
// Gram matrix; the other factor is recovered by projection. Near-zero
// singular directions are filled in with an orthonormal completion.
inline SvdResult svd(const Matrix& m) {
  if (!m.all_finite()) throw InvalidInput("svd: matrix has non-finite entries");
  const std::size_t rows = m.rows(), cols = m.cols();
  const std::size_t r = std::min(rows, cols);
  const bool gram_left = rows <= cols;

  Matrix gram = gram_left ? matmul_nt(m, m) : matmul_tn(m, m);
  Spectrum eig = symmetric_eig(gram);

  SvdResult out;
  out.singular_values.resize(r);
  out.left_vectors = Matrix(r, rows);
  out.right_vectors = Matrix(r, cols);

  double sigma_max = std::sqrt(std::max(eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues[0], 0.0));
  const double cutoff = sigma_max * 1e-13;

  for (std::size_t i = 0; i < r; ++i) {
    const double sigma = std::sqrt(std::max(eig.eigenvalues[i], 0.0));
    out.singular_values[i] = sigma;
    Vector g = eig.eigenvectors.row_copy(i);
    if (gram_left) {
      out.left_vectors.set_row(i, g);
      if (sigma > cutoff && sigma > 0.0) {
        Vector v = matvec_t(m, g);
        for (double& x : v) x /= sigma;
        out.right_vectors.set_row(i, v);
      } else {
        detail::complete_orthonormal_row(out.right_vectors, i);
      }
    } else {
      out.right_vectors.set_row(i, g);
      if (sigma > cutoff && sigma > 0.0) {
        Vector u = matvec(m, g);
        for (double& x : u) x /= sigma;
        out.left_vectors.set_row(i, u);
      } else {
        detail::complete_orthonormal_row(out.left_vectors, i);
      }
    }
  }
  return out;
}

constexpr double kDefaultRcond = 1e-10;

// Moore-Penrose pseudoinverse; singular values below rcond * sigma_max are
// treated as zero.
inline Matrix pseudoinverse(const Matrix& m, double rcond = kDefaultRcond) {
  if (!(rcond > 0.0 && rcond < 1.0)) throw InvalidInput("pseudoinverse: rcond must be in (0,1)");
  SvdResult s = svd(m);
  const double sigma_max = s.singular_values.empty() ? 0.0 : s.singular_values[0];
  const double cut = rcond * sigma_max;

  Matrix pinv(m.cols(), m.rows());
  for (std::size_t i = 0; i < s.singular_values.size(); ++i) {
    const double sigma = s.singular_values[i];
    if (sigma <= cut || sigma == 0.0) continue;
    const double inv = 1.0 / sigma;
    const double* u = s.left_vectors.row(i);
    const double* v = s.right_vectors.row(i);
    for (std::size_t a = 0; a < m.cols(); ++a) {
      const double va = inv * v[a];
      for (std::size_t b = 0; b < m.rows(); ++b) pinv(a, b) += va * u[b];
    }
  }
  return pinv;
}

}  // namespace bilin
