#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bilin/data.hpp"
#include "bilin/decompose.hpp"
#include "bilin/errors.hpp"
#include "bilin/linalg.hpp"
#include "bilin/matrix.hpp"
#include "bilin/model.hpp"
#include "bilin/train.hpp"

namespace bilin {

// Binary relabeling by similarity to a target image or to its grayscale
// complement (one minus the pixel values).
struct ChallengeSpec {
  Vector target;  // pixel space, entries in [0, 1]
  enum class ThresholdRule { kMedianBalanced, kFixedTau } threshold_rule =
      ThresholdRule::kMedianBalanced;
  double tau = 0.0;  // used by kFixedTau
};

inline double challenge_score(const Vector& x, const Vector& target, const Vector& complement) {
  auto cosine = [](const Vector& a, const Vector& b) {
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
  };
  return std::max(cosine(x, target), cosine(x, complement));
}

struct LabeledChallenge {
  Dataset data;      // labels: 0 = False, 1 = True
  double tau = 0.0;  // threshold actually used; feeds kFixedTau on other splits
};

// score(x) = max(cos(x, t), cos(x, 1 - t)); label True iff score > tau.
inline LabeledChallenge generate_labels(const Dataset& data, const ChallengeSpec& spec) {
  if (norm2(spec.target) == 0.0) throw InvalidInput("generate_labels: target must be non-zero");
  if (spec.target.size() != data.images.cols())
    throw InvalidInput("generate_labels: target length != image width");
  Vector complement(spec.target.size());
  for (std::size_t i = 0; i < complement.size(); ++i) complement[i] = 1.0 - spec.target[i];

  Vector scores(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    scores[i] = challenge_score(data.images.row_copy(i), spec.target, complement);

  double tau = spec.tau;
  if (spec.threshold_rule == ChallengeSpec::ThresholdRule::kMedianBalanced) {
    Vector sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back())
      throw InvalidInput("generate_labels: degenerate scores, all equal");
    const std::size_t n = sorted.size();
    tau = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }

  LabeledChallenge out;
  out.tau = tau;
  out.data.images = data.images;
  out.data.split_tag = data.split_tag;
  out.data.labels.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.data.labels[i] = scores[i] > tau ? 1 : 0;
  return out;
}

struct ChallengeResult {
  Model model;
  Spectrum diff_spectrum;        // of the (u_True - u_False) interaction matrix
  Matrix pixel_eigenvectors;     // diff-spectrum eigenvectors projected via E^T
  double bias_diagonal = 0.0;    // augmented coordinate's diagonal entry of Q
  Vector bias_cross_pixel;       // augmented coordinate's cross row, pixel space
  double train_accuracy = 0.0;
  double truncated_train_accuracy = 0.0;  // one eigenvector per class
  double tau = 0.0;
  double lambda_dominance = 0.0;  // lambda_1^+ / max |other lambda|
};

// Trains a biased binary classifier on the generated labels and decomposes
// the bias-augmented interaction matrix along u_True - u_False. The learned
// threshold surfaces in the augmented coordinate, reported separately.
inline ChallengeResult run_challenge(const Dataset& data, const ChallengeSpec& spec,
                                     const TrainConfig& train_config,
                                     const ModelConfig& model_config) {
  if (!model_config.use_bias)
    throw InvalidInput("run_challenge: model must use biases");
  if (model_config.n_classes != 2)
    throw InvalidInput("run_challenge: challenge is binary, n_classes must be 2");

  LabeledChallenge labeled = generate_labels(data, spec);
  ChallengeResult out;
  out.tau = labeled.tau;
  out.model = train(train_config, model_config, labeled.data);

  Vector u_diff(2);
  u_diff[0] = -1.0;  // False
  u_diff[1] = 1.0;   // True
  Matrix q = interaction_matrix(out.model, u_diff);
  out.diff_spectrum = symmetric_eig(q, "True-False");

  const std::size_t d = model_config.embed_dim;
  out.pixel_eigenvectors = Matrix(out.diff_spectrum.size(), model_config.input_dim);
  for (std::size_t i = 0; i < out.diff_spectrum.size(); ++i) {
    Vector v(out.diff_spectrum.eigenvectors.row(i), out.diff_spectrum.eigenvectors.row(i) + d);
    out.pixel_eigenvectors.set_row(i, matvec_t(out.model.E, v));
  }

  out.bias_diagonal = q(d, d);
  Vector cross(d);
  for (std::size_t j = 0; j < d; ++j) cross[j] = q(d, j);
  out.bias_cross_pixel = matvec_t(out.model.E, cross);

  SpectrumCache cache;
  out.train_accuracy = evaluate(out.model, labeled.data).accuracy;
  out.truncated_train_accuracy = truncated_accuracy(out.model, 1, labeled.data, cache);

  // dominance of the top positive eigenvalue over every other |lambda|
  double top_positive = out.diff_spectrum.eigenvalues.empty() ? 0.0
                                                              : out.diff_spectrum.eigenvalues[0];
  double max_other = 0.0;
  for (std::size_t i = 1; i < out.diff_spectrum.size(); ++i)
    max_other = std::max(max_other, std::fabs(out.diff_spectrum.eigenvalues[i]));
  out.lambda_dominance = max_other > 0.0 ? top_positive / max_other
                                         : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace bilin
