#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bilin/data.hpp"
#include "bilin/decompose.hpp"
#include "bilin/errors.hpp"
#include "bilin/linalg.hpp"
#include "bilin/matrix.hpp"
#include "bilin/model.hpp"
#include "bilin/rng.hpp"
#include "bilin/train.hpp"

namespace bilin {

// Per-class adversarial masks: rows of the pseudoinverse of the stacked
// pixel-space eigenvectors. Pseudoinverse rows act like keys, activating
// their own eigenvector with Kronecker-delta specificity.
struct MaskSet {
  Matrix masks;       // n_classes x input_dim, rows normalized to unit L2
  Vector mask_norms;  // L2 norm each row had before normalization
  struct Source {
    std::size_t eig_rank = 1;  // which positive eigenvector per class (1 = top)
    double rcond = kDefaultRcond;
  } source;
  double scale = 1.0;  // additive multiplier applied at evaluation
};

// Stacks the rank-eig_rank positive pixel-space eigenvector of every class
// and takes pseudoinverse rows as masks.
inline MaskSet build_masks(const Model& model, std::size_t eig_rank = 1,
                           double rcond = kDefaultRcond,
                           SpectrumCache& cache = SpectrumCache::global()) {
  if (eig_rank < 1) throw InvalidInput("build_masks: eig_rank must be >= 1");
  const std::size_t n_classes = model.config.n_classes;
  Matrix stack(n_classes, model.config.input_dim);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto cs = cache.get_or_compute(model, c);
    // eigenvalues are sorted descending, so positives come first
    std::size_t positives = 0;
    std::size_t row = 0;
    bool found = false;
    for (std::size_t i = 0; i < cs->spectrum.size(); ++i) {
      if (cs->spectrum.eigenvalues[i] <= 0.0) break;
      if (++positives == eig_rank) {
        row = i;
        found = true;
        break;
      }
    }
    if (!found)
      throw InvalidInput("build_masks: class " + std::to_string(c) +
                         " has fewer than eig_rank positive eigenvalues");
    stack.set_row(c, cs->pixel_eigenvectors.row_copy(row));
  }

  SvdResult s = svd(stack);
  if (s.singular_values.back() <= rcond * s.singular_values.front())
    throw InvalidInput("build_masks: eigenvector stack is rank deficient");

  Matrix pinv = pseudoinverse(stack, rcond);  // input_dim x n_classes
  MaskSet out;
  out.source = {eig_rank, rcond};
  out.masks = Matrix(n_classes, model.config.input_dim);
  out.mask_norms.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    Vector row(model.config.input_dim);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = pinv(j, c);
    const double nrm = norm2(row);
    out.mask_norms[c] = nrm;
    if (nrm > 0.0)
      for (double& v : row) v /= nrm;
    out.masks.set_row(c, row);
  }
  return out;
}

struct AttackResult {
  double accuracy = 0.0;
  double target_rate = 0.0;  // non-target inputs steered into the target class
};

// Evaluates the model on x + scale * mask, clamped to [0, 1].
inline AttackResult attack_eval(const Model& model, const Dataset& data, const Vector& mask_row,
                                std::size_t target_class, double scale) {
  if (scale < 0.0) throw InvalidInput("attack_eval: scale must be >= 0");
  if (mask_row.size() != model.config.input_dim)
    throw InvalidInput("attack_eval: mask length != input_dim");
  if (target_class >= model.config.n_classes)
    throw InvalidInput("attack_eval: target class out of range");

  const std::size_t n = data.size();
  std::size_t correct = 0, steered = 0, non_target = 0;
  const std::size_t chunk = 2048;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t b = std::min(chunk, n - start);
    Matrix x(b, data.images.cols());
    for (std::size_t i = 0; i < b; ++i) {
      const double* src = data.images.row(start + i);
      double* dst = x.row(i);
      for (std::size_t j = 0; j < x.cols(); ++j)
        dst[j] = std::clamp(src[j] + scale * mask_row[j], 0.0, 1.0);
    }
    Matrix z = forward_batch(model, x);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t pred = argmax_lowest_tie(z.row(i), z.cols());
      const int y = data.labels[start + i];
      if (pred == std::size_t(y)) ++correct;
      if (std::size_t(y) != target_class) {
        ++non_target;
        if (pred == target_class) ++steered;
      }
    }
  }
  AttackResult r;
  r.accuracy = n ? double(correct) / double(n) : 0.0;
  r.target_rate = non_target ? double(steered) / double(non_target) : 0.0;
  return r;
}

// Uniformly random permutation of the mask entries; preserves the entry
// multiset (and hence every p-norm) exactly.
inline Vector permuted_baseline(const Vector& mask_row, std::uint64_t seed) {
  Vector out = mask_row;
  CounterRng rng(seed, RngStream::kGeneric);
  rng.shuffle(out);
  return out;
}

// Restrict a mask to rarely active pixels: zero every entry whose pixel is
// positive on at least `activity_threshold` of the samples, then renormalize.
inline Vector edge_mask(const Dataset& data, const Vector& mask_row,
                        double activity_threshold = 0.01) {
  if (!(activity_threshold > 0.0 && activity_threshold <= 1.0))
    throw InvalidInput("edge_mask: threshold must be in (0, 1]");
  if (mask_row.size() != data.images.cols())
    throw InvalidInput("edge_mask: mask length != image width");

  const std::size_t n = data.size();
  Vector out = mask_row;
  for (std::size_t j = 0; j < out.size(); ++j) {
    std::size_t active = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (data.images(i, j) > 0.0) ++active;
    if (double(active) >= activity_threshold * double(n)) out[j] = 0.0;
  }
  const double nrm = norm2(out);
  if (nrm == 0.0) throw InvalidInput("edge_mask: no pixels below the activity threshold");
  for (double& v : out) v /= nrm;
  return out;
}

}  // namespace bilin
