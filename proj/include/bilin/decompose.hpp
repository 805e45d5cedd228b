#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "bilin/data.hpp"
#include "bilin/errors.hpp"
#include "bilin/hash.hpp"
#include "bilin/linalg.hpp"
#include "bilin/matrix.hpp"
#include "bilin/model.hpp"

namespace bilin {

// Content digest of a model's weights; keys the spectrum cache.
inline std::string model_digest(const Model& model) {
  std::string blob = model.config.canonical_text();
  blob += ";seed=" + std::to_string(model.seed);
  blob += ";aug=" + std::string(model.augmented ? "1" : "0") + ";";
  auto append = [&blob](const double* p, std::size_t n) {
    blob.append(reinterpret_cast<const char*>(p), n * sizeof(double));
  };
  append(model.E.data(), model.E.size());
  append(model.W.data(), model.W.size());
  append(model.V.data(), model.V.size());
  if (model.b1) append(model.b1->data(), model.b1->size());
  if (model.b2) append(model.b2->data(), model.b2->size());
  append(model.U.data(), model.U.size());
  return sha256_hex(blob);
}

// Spectrum of one class direction plus its eigenvectors projected to pixel
// space through E^T (the adjoint is the faithful visualization direction,
// since the activation is (E^T v) . x).
struct ClassSpectrum {
  std::size_t class_index = 0;
  Spectrum spectrum;
  Matrix pixel_eigenvectors;  // one row per eigenvector, length input_dim
};

inline ClassSpectrum class_spectrum(const Model& model, std::size_t class_index) {
  if (class_index >= model.config.n_classes)
    throw InvalidInput("class_spectrum: class index out of range");
  Vector u(model.config.n_classes, 0.0);
  u[class_index] = 1.0;
  Matrix q = interaction_matrix(model, u);

  ClassSpectrum out;
  out.class_index = class_index;
  out.spectrum = symmetric_eig(q, "class:" + std::to_string(class_index));

  const std::size_t dim = out.spectrum.eigenvectors.cols();
  const std::size_t d = model.config.embed_dim;
  out.pixel_eigenvectors = Matrix(dim, model.config.input_dim);
  for (std::size_t i = 0; i < dim; ++i) {
    Vector v(out.spectrum.eigenvectors.row(i), out.spectrum.eigenvectors.row(i) + d);
    Vector pix = matvec_t(model.E, v);
    out.pixel_eigenvectors.set_row(i, pix);
  }
  return out;
}

// Deterministic values allow last-write-wins on concurrent insertion.
class SpectrumCache {
 public:
  std::shared_ptr<const ClassSpectrum> get_or_compute(const Model& model,
                                                      std::size_t class_index) {
    const std::string digest = model_digest(model);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = map_.find({digest, class_index});
      if (it != map_.end()) return it->second;
    }
    auto value = std::make_shared<const ClassSpectrum>(class_spectrum(model, class_index));
    std::lock_guard<std::mutex> lock(mu_);
    map_[{digest, class_index}] = value;
    return value;
  }

  void clear() {
    std::lock_guard<std::mutex> lock(mu_);
    map_.clear();
  }

  static SpectrumCache& global() {
    static SpectrumCache cache;
    return cache;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<std::string, std::size_t>, std::shared_ptr<const ClassSpectrum>> map_;
};

// Per-eigenvector contributions lambda_i (v_i . e)^2; their sum is the class
// logit.
inline Vector eigen_activations(const ClassSpectrum& cs, const Model& model, const Vector& x) {
  const Vector e = model.interaction_input(x);
  if (e.size() != cs.spectrum.eigenvectors.cols())
    throw InvalidInput("eigen_activations: spectrum/model dimension mismatch");
  Vector terms(cs.spectrum.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    double proj = 0.0;
    const double* v = cs.spectrum.eigenvectors.row(i);
    for (std::size_t j = 0; j < e.size(); ++j) proj += v[j] * e[j];
    terms[i] = cs.spectrum.eigenvalues[i] * proj * proj;
  }
  return terms;
}

namespace detail {

// indices of the top-k eigenpairs by |lambda|, order stable in the original
// (signed-descending) ordering
inline std::vector<std::size_t> top_k_by_magnitude(const Vector& eigenvalues, std::size_t k) {
  std::vector<std::size_t> idx(eigenvalues.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(eigenvalues[a]) > std::fabs(eigenvalues[b]);
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

}  // namespace detail

// Logits retaining only the k most important eigenpairs (by |lambda|) per
// class. At full k this reproduces forward() up to roundoff.
inline Matrix truncated_logits_batch(const Model& model, std::size_t k, const Matrix& x,
                                     SpectrumCache& cache = SpectrumCache::global()) {
  if (k > model.interaction_dim())
    throw InvalidInput("truncated_logits: k exceeds decomposition dimension");
  const std::size_t n = x.rows();
  const std::size_t n_classes = model.config.n_classes;

  Matrix eb = matmul_nt(x, model.E);
  if (model.augmented)
    for (std::size_t i = 0; i < n; ++i) eb(i, model.config.embed_dim - 1) = 1.0;
  if (model.config.use_bias) {
    Matrix ext(n, eb.cols() + 1);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(eb.row(i), eb.row(i) + eb.cols(), ext.row(i));
      ext(i, eb.cols()) = 1.0;
    }
    eb = std::move(ext);
  }

  Matrix logits(n, n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto cs = cache.get_or_compute(model, c);
    const auto idx = detail::top_k_by_magnitude(cs->spectrum.eigenvalues, k);
    if (idx.empty()) continue;
    Matrix vk(idx.size(), eb.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::copy(cs->spectrum.eigenvectors.row(idx[r]),
                cs->spectrum.eigenvectors.row(idx[r]) + eb.cols(), vk.row(r));
    Matrix proj = matmul_nt(eb, vk);  // n x k
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < idx.size(); ++r)
        acc += cs->spectrum.eigenvalues[idx[r]] * proj(i, r) * proj(i, r);
      logits(i, c) = acc;
    }
  }
  return logits;
}

inline Vector truncated_logits(const Model& model, std::size_t k, const Vector& x,
                               SpectrumCache& cache = SpectrumCache::global()) {
  Matrix xm(1, x.size());
  xm.set_row(0, x);
  Matrix z = truncated_logits_batch(model, k, xm, cache);
  return z.row_copy(0);
}

// Accuracy of the rank-k truncated classifier.
inline double truncated_accuracy(const Model& model, std::size_t k, const Dataset& data,
                                 SpectrumCache& cache = SpectrumCache::global()) {
  std::size_t hits = 0;
  const std::size_t chunk = 2048;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t b = std::min(chunk, data.size() - start);
    Matrix x(b, data.images.cols());
    for (std::size_t i = 0; i < b; ++i)
      std::copy(data.images.row(start + i), data.images.row(start + i) + data.images.cols(),
                x.row(i));
    Matrix z = truncated_logits_batch(model, k, x, cache);
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < z.cols(); ++j)
        if (z(i, j) > z(i, best)) best = j;
      if (int(best) == data.labels[start + i]) ++hits;
    }
  }
  return data.size() ? double(hits) / double(data.size()) : 0.0;
}

enum class HosvdBasis { kHidden, kClasses };

// SVD of the output x (input^2) flattening of the symmetrized tensor.
struct HosvdResult {
  Vector singular_values;                    // descending, >= 0
  Matrix output_directions;                  // orthonormal rows
  std::vector<Matrix> interaction_components;  // unit Frobenius norm, symmetric
  double tensor_energy = 0.0;                // ||sym tensor||_F^2 via the Gram trace
};

// Computed through the Gram identity
//   G_ab = 1/2 [ (w_a.w_b)(v_a.v_b) + (w_a.v_b)(v_a.w_b) ]
// so the d^2-wide flattening is never materialized.
inline HosvdResult hosvd(const Model& model_in, std::size_t max_components,
                         HosvdBasis basis = HosvdBasis::kHidden) {
  const Model* model = &model_in;
  Model augmented_storage;
  if (model_in.config.use_bias) {
    augmented_storage = augment_bias(model_in);
    model = &augmented_storage;
  }

  Matrix gram;
  std::vector<Matrix> class_slices;
  if (basis == HosvdBasis::kHidden) {
    if (max_components > model->config.hidden())
      throw InvalidInput("hosvd: max_components exceeds hidden_dim");
    Matrix gww = matmul_nt(model->W, model->W);
    Matrix gvv = matmul_nt(model->V, model->V);
    Matrix gwv = matmul_nt(model->W, model->V);
    const std::size_t h = model->config.hidden();
    gram = Matrix(h, h);
    for (std::size_t a = 0; a < h; ++a)
      for (std::size_t b = 0; b < h; ++b)
        gram(a, b) = 0.5 * (gww(a, b) * gvv(a, b) + gwv(a, b) * gwv(b, a));
  } else {
    if (max_components > model->config.n_classes)
      throw InvalidInput("hosvd: max_components exceeds n_classes");
    const std::size_t nc = model->config.n_classes;
    class_slices.reserve(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      Vector u(nc, 0.0);
      u[c] = 1.0;
      class_slices.push_back(interaction_matrix(*model, u));
    }
    gram = Matrix(nc, nc);
    for (std::size_t a = 0; a < nc; ++a)
      for (std::size_t b = a; b < nc; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < class_slices[a].size(); ++i)
          acc += class_slices[a].data()[i] * class_slices[b].data()[i];
        gram(a, b) = acc;
        gram(b, a) = acc;
      }
  }

  Spectrum eig = symmetric_eig(gram);
  for (double lam : eig.eigenvalues)
    if (lam < -1e-8) throw NumericalFailure("hosvd: Gram matrix has a negative eigenvalue");

  HosvdResult out;
  for (std::size_t i = 0; i < gram.rows(); ++i) out.tensor_energy += gram(i, i);

  const std::size_t count = std::min(max_components, eig.size());
  out.singular_values.resize(count);
  out.output_directions = Matrix(count, gram.rows());
  const double sigma_max = std::sqrt(std::max(eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues[0], 0.0));
  for (std::size_t i = 0; i < count; ++i) {
    const double sigma = std::sqrt(std::max(eig.eigenvalues[i], 0.0));
    out.singular_values[i] = sigma;
    out.output_directions.set_row(i, eig.eigenvectors.row_copy(i));
    if (sigma > sigma_max * 1e-12) {
      Vector dir = eig.eigenvectors.row_copy(i);
      Matrix q;
      if (basis == HosvdBasis::kHidden) {
        q = interaction_matrix_hidden(*model, dir);
      } else {
        q = Matrix(class_slices[0].rows(), class_slices[0].cols());
        for (std::size_t cidx = 0; cidx < class_slices.size(); ++cidx)
          for (std::size_t j = 0; j < q.size(); ++j)
            q.data()[j] += dir[cidx] * class_slices[cidx].data()[j];
      }
      const double inv = 1.0 / sigma;
      for (std::size_t j = 0; j < q.size(); ++j) q.data()[j] *= inv;
      out.interaction_components.push_back(std::move(q));
    }
  }
  return out;
}

// Interaction matrices re-expressed in a feature basis: for each output
// read-off direction t = rows_out[a], returns D_in^T Q(t) D_in (symmetric in
// the two feature indices).
inline std::vector<Matrix> feature_transform(const Model& model, const Matrix& d_in,
                                             const Matrix& rows_out) {
  if (d_in.rows() != model.interaction_dim())
    throw InvalidInput("feature_transform: D_in rows must match interaction dimension");
  if (rows_out.cols() != model.config.hidden())
    throw InvalidInput("feature_transform: rows_out cols must match hidden_dim");

  std::vector<Matrix> out;
  out.reserve(rows_out.rows());
  for (std::size_t a = 0; a < rows_out.rows(); ++a) {
    Matrix q = interaction_matrix_hidden(model, rows_out.row_copy(a));
    out.push_back(matmul_tn(d_in, matmul(q, d_in)));
  }
  return out;
}

// Change of basis for the bilinear tensor (pseudoinverse route): given
// spectra of the interaction matrices along the rows of U_stack, rebuild the
// tensor slice by slice so that contracting with u_k recovers Q_k.
struct ReexpressedTensor {
  std::vector<Matrix> slices;  // one per output dimension

  Matrix contract(const Vector& u) const {
    if (u.size() != slices.size()) throw InvalidInput("contract: direction length mismatch");
    Matrix q(slices[0].rows(), slices[0].cols());
    for (std::size_t a = 0; a < slices.size(); ++a)
      for (std::size_t j = 0; j < q.size(); ++j) q.data()[j] += u[a] * slices[a].data()[j];
    return q;
  }
};

inline ReexpressedTensor reexpress_tensor(const std::vector<std::pair<Vector, Spectrum>>& spectra,
                                          const Matrix& u_stack) {
  if (spectra.empty()) throw InvalidInput("reexpress_tensor: no spectra given");
  const std::size_t m = u_stack.rows(), d_out = u_stack.cols();
  if (spectra.size() != m) throw InvalidInput("reexpress_tensor: spectra/U_stack count mismatch");
  if (m < d_out) throw InvalidInput("reexpress_tensor: U_stack cannot have rank d_out");
  SvdResult s = svd(u_stack);
  if (s.singular_values.back() <= kDefaultRcond * s.singular_values.front())
    throw InvalidInput("reexpress_tensor: U_stack is rank deficient");
  Matrix u_pinv = pseudoinverse(u_stack);  // d_out x m

  const std::size_t dim = spectra[0].second.eigenvectors.cols();
  ReexpressedTensor out;
  out.slices.assign(d_out, Matrix(dim, dim));
  for (std::size_t k = 0; k < m; ++k) {
    if (spectra[k].first.size() != d_out)
      throw InvalidInput("reexpress_tensor: direction length mismatch");
    Matrix qk = spectra[k].second.reconstruct();
    for (std::size_t a = 0; a < d_out; ++a) {
      const double coef = u_pinv(a, k);
      if (coef == 0.0) continue;
      for (std::size_t j = 0; j < qk.size(); ++j) out.slices[a].data()[j] += coef * qk.data()[j];
    }
  }
  return out;
}

struct CorrelationReport {
  Vector all_corr;     // one entry per direction
  Vector active_corr;  // conditioned on the full activation being positive
};

namespace detail {

inline double pearson(const Vector& x, const Vector& y) {
  if (x == y) return 1.0;  // identical series: exact by definition
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// Pearson correlation between the full quadratic-form activation and its
// top-k eigen-approximation, over all inputs and restricted to inputs where
// the full activation is positive.
inline CorrelationReport low_rank_correlation(const Model& model,
                                              const std::vector<ClassSpectrum>& spectra,
                                              std::size_t k, const Dataset& data) {
  if (k < 1) throw InvalidInput("low_rank_correlation: k must be >= 1");
  CorrelationReport report;
  for (const ClassSpectrum& cs : spectra) {
    Vector full(data.size()), approx(data.size());
    const auto idx = detail::top_k_by_magnitude(cs.spectrum.eigenvalues, k);
    for (std::size_t i = 0; i < data.size(); ++i) {
      Vector terms = eigen_activations(cs, model, data.images.row_copy(i));
      double f = 0.0;
      for (double t : terms) f += t;
      double a = 0.0;
      for (std::size_t r : idx) a += terms[r];
      full[i] = f;
      approx[i] = a;
    }
    Vector full_active, approx_active;
    for (std::size_t i = 0; i < full.size(); ++i)
      if (full[i] > 0.0) {
        full_active.push_back(full[i]);
        approx_active.push_back(approx[i]);
      }
    if (full_active.size() < 3)
      throw InsufficientData("low_rank_correlation: fewer than 3 active samples");
    report.all_corr.push_back(detail::pearson(full, approx));
    report.active_corr.push_back(detail::pearson(full_active, approx_active));
  }
  return report;
}

}  // namespace bilin
