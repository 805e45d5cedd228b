#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bilin/data.hpp"
#include "bilin/decompose.hpp"
#include "bilin/errors.hpp"
#include "bilin/matrix.hpp"
#include "bilin/model.hpp"
#include "bilin/rng.hpp"
#include "bilin/train.hpp"

namespace bilin {

// Absolute cosine similarities of rank-matched eigenvectors over model pairs;
// pixel space so differently sized models are comparable.
struct SimilarityReport {
  Matrix per_rank_similarity;  // rank x unordered model pair
  Vector mean_per_rank;
  std::pair<Vector, Vector> confidence_band;  // empirical 5th / 95th percentile
};

namespace detail {

inline double abs_cosine(const Vector& a, const Vector& b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::fabs(dot(a, b)) / (na * nb);
}

inline double percentile(Vector values, double q) {
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double pos = q * double(values.size() - 1);
  const std::size_t lo = std::size_t(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace detail

// |cos| between rank-matched pixel-space eigenvectors over all unordered
// model pairs. Absolute value because eigenvector sign is arbitrary.
inline SimilarityReport eigenvector_similarity(const std::vector<Model>& models,
                                               std::size_t class_index, std::size_t top_k,
                                               SpectrumCache& cache = SpectrumCache::global()) {
  if (models.size() < 2) throw InvalidInput("eigenvector_similarity: need at least 2 models");
  for (const Model& m : models)
    if (m.config.input_dim != models[0].config.input_dim)
      throw InvalidInput("eigenvector_similarity: models disagree on input_dim");

  std::vector<std::shared_ptr<const ClassSpectrum>> spectra;
  std::size_t max_rank = top_k;
  for (const Model& m : models) {
    spectra.push_back(cache.get_or_compute(m, class_index));
    max_rank = std::min(max_rank, spectra.back()->pixel_eigenvectors.rows());
  }

  const std::size_t n_pairs = models.size() * (models.size() - 1) / 2;
  SimilarityReport report;
  report.per_rank_similarity = Matrix(max_rank, n_pairs);
  report.mean_per_rank.resize(max_rank);
  report.confidence_band.first.resize(max_rank);
  report.confidence_band.second.resize(max_rank);

  for (std::size_t r = 0; r < max_rank; ++r) {
    std::size_t p = 0;
    Vector values;
    for (std::size_t a = 0; a < models.size(); ++a)
      for (std::size_t b = a + 1; b < models.size(); ++b, ++p) {
        const double c = detail::abs_cosine(spectra[a]->pixel_eigenvectors.row_copy(r),
                                            spectra[b]->pixel_eigenvectors.row_copy(r));
        report.per_rank_similarity(r, p) = c;
        values.push_back(c);
      }
    double mean = 0.0;
    for (double v : values) mean += v;
    report.mean_per_rank[r] = mean / double(values.size());
    report.confidence_band.first[r] = detail::percentile(values, 0.05);
    report.confidence_band.second[r] = detail::percentile(values, 0.95);
  }
  return report;
}

// (L1/L2)^2: a continuous stand-in for the count of non-negligible entries;
// 1 for a one-hot vector, len(v) for a constant one.
inline double sparsity_l1l2(const Vector& v) {
  const double l2 = norm2(v);
  if (l2 == 0.0) throw InvalidInput("sparsity_l1l2: zero vector");
  const double ratio = norm1(v) / l2;
  return ratio * ratio;
}

struct SweepCell {
  double noise_std = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double eigenvalue_sparsity = 0.0;   // mean over classes of (L1/L2)^2 of the eigenvalue vector
  double eigenvector_sparsity = 0.0;  // mean over classes of the top-5 pixel eigenvectors
};

// Trains one model per (noise, weight decay) cell and reports the two
// sparsity summaries. Cell seeds are derived from the base seed so cells
// could run in parallel without sharing streams.
inline std::vector<SweepCell> sparsity_sweep(const std::vector<double>& noise_stds,
                                             const std::vector<double>& weight_decays,
                                             const TrainConfig& base_config,
                                             const ModelConfig& model_config,
                                             const Dataset& data) {
  if (noise_stds.empty() || weight_decays.empty())
    throw InvalidInput("sparsity_sweep: empty grid");
  std::vector<SweepCell> table;
  std::size_t cell_index = 0;
  for (double noise : noise_stds)
    for (double wd : weight_decays) {
      TrainConfig config = base_config;
      config.noise_std = noise;
      config.noise_norm.reset();
      config.weight_decay = wd;
      config.seed = derive_seed(base_config.seed, cell_index);
      Model model = train(config, model_config, data);

      SpectrumCache cache;  // local: sweep models are throwaway
      SweepCell cell;
      cell.noise_std = noise;
      cell.weight_decay = wd;
      cell.seed = config.seed;
      double val_acc = 0.0, vec_acc = 0.0;
      std::size_t vec_count = 0;
      for (std::size_t c = 0; c < model_config.n_classes; ++c) {
        auto cs = cache.get_or_compute(model, c);
        val_acc += sparsity_l1l2(cs->spectrum.eigenvalues);
        const auto idx = detail::top_k_by_magnitude(cs->spectrum.eigenvalues, 5);
        for (std::size_t r : idx) {
          vec_acc += sparsity_l1l2(cs->pixel_eigenvectors.row_copy(r));
          ++vec_count;
        }
      }
      cell.eigenvalue_sparsity = val_acc / double(model_config.n_classes);
      cell.eigenvector_sparsity = vec_acc / double(vec_count);
      table.push_back(cell);
      ++cell_index;
    }
  return table;
}

struct ExplainTerm {
  std::size_t rank = 0;  // index into the class spectrum
  double eigenvalue = 0.0;
  double activation = 0.0;
};

struct ExplainClassEntry {
  std::size_t class_index = 0;
  double logit = 0.0;
  double activation_sum = 0.0;  // over all eigenvectors; equals the logit
  std::vector<ExplainTerm> terms;  // top_m by |activation|
  std::shared_ptr<const ClassSpectrum> spectrum;  // for rendering
};

struct ExplainReport {
  Vector logits;
  std::vector<ExplainClassEntry> top_classes;  // top 3 by logit
};

// Ranked eigenvector activations behind an individual prediction.
inline ExplainReport explain_input(const Model& model, const Vector& x, std::size_t top_m,
                                   SpectrumCache& cache = SpectrumCache::global()) {
  ExplainReport report;
  report.logits = forward(model, x);

  std::vector<std::size_t> order(report.logits.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return report.logits[a] > report.logits[b]; });
  order.resize(std::min<std::size_t>(3, order.size()));

  for (std::size_t c : order) {
    ExplainClassEntry entry;
    entry.class_index = c;
    entry.logit = report.logits[c];
    entry.spectrum = cache.get_or_compute(model, c);
    Vector terms = eigen_activations(*entry.spectrum, model, x);
    for (double t : terms) entry.activation_sum += t;

    std::vector<std::size_t> idx(terms.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return std::fabs(terms[a]) > std::fabs(terms[b]);
    });
    idx.resize(std::min(top_m, idx.size()));
    for (std::size_t i : idx)
      entry.terms.push_back({i, entry.spectrum->spectrum.eigenvalues[i], terms[i]});
    report.top_classes.push_back(std::move(entry));
  }
  return report;
}

}  // namespace bilin
