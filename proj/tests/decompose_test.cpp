#include "bilin/decompose.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "bilin/rng.hpp"
#include "testutil.hpp"

namespace bilin {
namespace {

using testutil::random_matrix;
using testutil::random_model;
using testutil::random_symmetric;
using testutil::random_vector;

Model identity_embed_model(std::size_t dim, std::size_t hidden, std::size_t classes,
                           std::uint64_t seed) {
  ModelConfig cfg;
  cfg.input_dim = dim;
  cfg.embed_dim = dim;
  cfg.hidden_dim = hidden;
  cfg.n_classes = classes;
  Model m = init_model(cfg, seed);
  m.E = Matrix::identity(dim);
  return m;
}

TEST(ClassSpectrum, SharedWeightsRankOne) {
  // U row selects a single neuron and W = V, so Q = w_a w_a^T exactly
  Model m = identity_embed_model(6, 3, 2, 3);
  m.V = m.W;
  m.U = Matrix(2, 3);
  m.U(0, 1) = 1.0;  // class 0 reads neuron 1

  ClassSpectrum cs = class_spectrum(m, 0);
  const Vector w = m.W.row_copy(1);
  EXPECT_NEAR(cs.spectrum.eigenvalues[0], dot(w, w), 1e-12);
  for (std::size_t i = 1; i < cs.spectrum.size(); ++i)
    EXPECT_LE(std::fabs(cs.spectrum.eigenvalues[i]), 1e-12);
}

TEST(ClassSpectrum, ZeroHeadRowGivesZeroSpectrum) {
  Model m = identity_embed_model(5, 4, 3, 7);
  for (std::size_t j = 0; j < m.U.cols(); ++j) m.U(2, j) = 0.0;
  ClassSpectrum cs = class_spectrum(m, 2);
  for (double lam : cs.spectrum.eigenvalues) EXPECT_DOUBLE_EQ(lam, 0.0);
}

TEST(ClassSpectrum, PixelProjectionUsesAdjoint) {
  ModelConfig cfg;
  cfg.input_dim = 7;
  cfg.embed_dim = 4;
  cfg.n_classes = 2;
  Model m = random_model(cfg, 9);
  ClassSpectrum cs = class_spectrum(m, 1);
  for (std::size_t i = 0; i < cs.spectrum.size(); ++i) {
    Vector expected = matvec_t(m.E, cs.spectrum.eigenvectors.row_copy(i));
    Vector got = cs.pixel_eigenvectors.row_copy(i);
    for (std::size_t j = 0; j < 7; ++j) EXPECT_DOUBLE_EQ(got[j], expected[j]);
  }
}

TEST(EigenActivations, AlignedInputIsolatesOneTerm) {
  Model m = identity_embed_model(6, 6, 2, 11);
  ClassSpectrum cs = class_spectrum(m, 0);
  // E = I, so x = v_1 gives Ex = v_1
  Vector x = cs.spectrum.eigenvectors.row_copy(0);
  Vector terms = eigen_activations(cs, m, x);
  EXPECT_NEAR(terms[0], cs.spectrum.eigenvalues[0], 1e-10);
  for (std::size_t i = 1; i < terms.size(); ++i) EXPECT_LE(std::fabs(terms[i]), 1e-12);
}

TEST(EigenActivations, ZeroInputAllZero) {
  Model m = identity_embed_model(4, 4, 2, 13);
  ClassSpectrum cs = class_spectrum(m, 1);
  for (double t : eigen_activations(cs, m, Vector(4, 0.0))) EXPECT_DOUBLE_EQ(t, 0.0);
}

TEST(EigenActivations, SumToLogit) {
  ModelConfig cfg;
  cfg.input_dim = 10;
  cfg.embed_dim = 8;
  cfg.n_classes = 4;
  Model m = random_model(cfg, 17);
  for (std::size_t c = 0; c < 4; ++c) {
    ClassSpectrum cs = class_spectrum(m, c);
    for (std::uint64_t s = 0; s < 10; ++s) {
      Vector x = random_vector(10, 900 + s);
      Vector terms = eigen_activations(cs, m, x);
      double sum = 0.0;
      for (double t : terms) sum += t;
      const double logit = forward(m, x)[c];
      EXPECT_LE(std::fabs(sum - logit), 1e-10 * std::max(1.0, std::fabs(logit)));
    }
  }
}

TEST(EigenActivations, SumToLogitWithBiases) {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.embed_dim = 5;
  cfg.n_classes = 3;
  cfg.use_bias = true;
  Model m = random_model(cfg, 19, /*random_biases=*/true);
  ClassSpectrum cs = class_spectrum(m, 0);
  Vector x = random_vector(6, 42);
  Vector terms = eigen_activations(cs, m, x);
  double sum = 0.0;
  for (double t : terms) sum += t;
  const double logit = forward(m, x)[0];
  EXPECT_LE(std::fabs(sum - logit), 1e-10 * std::max(1.0, std::fabs(logit)));
}

TEST(TruncatedLogits, FullRankEqualsForward) {
  ModelConfig cfg;
  cfg.input_dim = 9;
  cfg.embed_dim = 7;
  cfg.n_classes = 3;
  Model m = random_model(cfg, 23);
  SpectrumCache cache;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Vector x = random_vector(9, 1700 + s);
    Vector full = forward(m, x);
    Vector trunc = truncated_logits(m, 7, x, cache);
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_LE(std::fabs(full[c] - trunc[c]), 1e-10 * std::max(1.0, std::fabs(full[c])));
  }
}

TEST(TruncatedLogits, KZeroGivesZeroLogits) {
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.embed_dim = 5;
  cfg.n_classes = 2;
  Model m = random_model(cfg, 29);
  SpectrumCache cache;
  Vector z = truncated_logits(m, 0, random_vector(5, 31), cache);
  for (double v : z) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(TruncatedLogits, RejectsOversizedK) {
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.embed_dim = 4;
  cfg.n_classes = 2;
  Model m = random_model(cfg, 31);
  SpectrumCache cache;
  EXPECT_THROW(truncated_logits(m, 5, Vector(5, 0.0), cache), InvalidInput);
}

TEST(EckartYoung, TopKBeatsRandomRankKBaselines) {
  Matrix q = random_symmetric(10, 37);
  Spectrum s = symmetric_eig(q);
  CounterRng rng(41, RngStream::kGeneric);
  for (std::size_t k = 1; k < 10; ++k) {
    // top-k by |lambda|
    Matrix approx(10, 10);
    auto idx = detail::top_k_by_magnitude(s.eigenvalues, k);
    for (std::size_t r : idx) {
      const double lam = s.eigenvalues[r];
      for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j)
          approx(i, j) += lam * s.eigenvectors(r, i) * s.eigenvectors(r, j);
    }
    const double best = frobenius_distance(q, approx);

    for (int trial = 0; trial < 1000; ++trial) {
      Matrix baseline(10, 10);
      for (std::size_t r = 0; r < k; ++r) {
        Vector v(10);
        for (double& x : v) x = rng.normal();
        const double nrm = norm2(v);
        for (double& x : v) x /= nrm;
        const double coef = 2.0 * rng.normal();
        for (std::size_t i = 0; i < 10; ++i)
          for (std::size_t j = 0; j < 10; ++j) baseline(i, j) += coef * v[i] * v[j];
      }
      EXPECT_LE(best, frobenius_distance(q, baseline) + 1e-12);
    }
  }
}

TEST(Hosvd, OneNeuron) {
  Model m = identity_embed_model(5, 1, 1, 43);
  HosvdResult res = hosvd(m, 1);
  ASSERT_EQ(res.singular_values.size(), 1u);

  Matrix slice(5, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      slice(i, j) = 0.5 * (m.W(0, i) * m.V(0, j) + m.W(0, j) * m.V(0, i));
  EXPECT_NEAR(res.singular_values[0], frobenius_norm(slice), 1e-10);
  ASSERT_EQ(res.interaction_components.size(), 1u);
  EXPECT_NEAR(frobenius_norm(res.interaction_components[0]), 1.0, 1e-8);
}

TEST(Hosvd, DuplicateNeuronsCollapse) {
  Model m = identity_embed_model(6, 2, 1, 47);
  for (std::size_t j = 0; j < 6; ++j) {
    m.W(1, j) = m.W(0, j);
    m.V(1, j) = m.V(0, j);
  }
  HosvdResult res = hosvd(m, 2);
  ASSERT_EQ(res.singular_values.size(), 2u);
  EXPECT_LE(res.singular_values[1], 1e-8 * res.singular_values[0]);
}

TEST(Hosvd, MatchesDenseFlatteningOracle) {
  // d=6, h=4: materialize the 4 x 36 flattening explicitly and SVD it
  Model m = identity_embed_model(6, 4, 2, 53);
  Matrix flat(4, 36);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        flat(a, i * 6 + j) = 0.5 * (m.W(a, i) * m.V(a, j) + m.W(a, j) * m.V(a, i));

  SvdResult dense = svd(flat);
  HosvdResult res = hosvd(m, 4);
  ASSERT_EQ(res.singular_values.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(res.singular_values[i], dense.singular_values[i], 1e-8);

  // components match the reshaped right singular vectors up to sign
  for (std::size_t i = 0; i < res.interaction_components.size(); ++i) {
    if (res.singular_values[i] < 1e-10) continue;
    double dot_abs = 0.0;
    for (std::size_t e = 0; e < 36; ++e)
      dot_abs += res.interaction_components[i].data()[e] * dense.right_vectors(i, e);
    EXPECT_NEAR(std::fabs(dot_abs), 1.0, 1e-8);
  }

  // energy identity: sum of sigma^2 equals the squared Frobenius norm of the
  // flattened tensor, computed via the Gram trace
  double energy = 0.0;
  for (double sv : res.singular_values) energy += sv * sv;
  const double fro2 = frobenius_norm(flat) * frobenius_norm(flat);
  EXPECT_LE(std::fabs(energy - fro2) / fro2, 1e-8);
  EXPECT_LE(std::fabs(res.tensor_energy - fro2) / fro2, 1e-8);
}

TEST(Hosvd, ClassBasisReconstructsInteractionMatrices) {
  Model m = identity_embed_model(5, 6, 3, 59);
  HosvdResult res = hosvd(m, 3, HosvdBasis::kClasses);
  // rebuild each class slice from the rank-3 expansion
  for (std::size_t c = 0; c < 3; ++c) {
    Vector u(3, 0.0);
    u[c] = 1.0;
    Matrix expected = interaction_matrix(m, u);
    Matrix rebuilt(5, 5);
    for (std::size_t i = 0; i < res.interaction_components.size(); ++i) {
      const double coef = res.singular_values[i] * res.output_directions(i, c);
      for (std::size_t e = 0; e < rebuilt.size(); ++e)
        rebuilt.data()[e] += coef * res.interaction_components[i].data()[e];
    }
    EXPECT_LE(frobenius_distance(rebuilt, expected) / std::max(1.0, frobenius_norm(expected)),
              1e-8);
  }
}

TEST(FeatureTransform, IdentityDictionariesRecoverTensorEntries) {
  Model m = identity_embed_model(5, 3, 2, 61);
  std::vector<Matrix> q = feature_transform(m, Matrix::identity(5), Matrix::identity(3));
  ASSERT_EQ(q.size(), 3u);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        EXPECT_DOUBLE_EQ(q[a](i, j), 0.5 * (m.W(a, i) * m.V(a, j) + m.W(a, j) * m.V(a, i)));
}

TEST(FeatureTransform, OrthogonalRotationPreservesQuadraticForms) {
  Model m = identity_embed_model(6, 4, 2, 67);
  Matrix rot = symmetric_eig(random_symmetric(6, 71)).eigenvectors;  // orthonormal rows
  Matrix d_in = transpose(rot);                                      // columns are features

  Vector t = random_vector(4, 73);
  Matrix rows_out(1, 4);
  rows_out.set_row(0, t);
  Matrix q = interaction_matrix_hidden(m, t);
  Matrix q_tilde = feature_transform(m, d_in, rows_out)[0];

  for (std::uint64_t s = 0; s < 10; ++s) {
    Vector a = random_vector(6, 1900 + s);
    Vector a_tilde = matvec(rot, a);  // coordinates in the rotated basis
    const double lhs = quadratic_form(q_tilde, a_tilde, a_tilde);
    const double rhs = quadratic_form(q, a, a);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::fabs(rhs)));
  }
}

TEST(FeatureTransform, MatchesTripleLoopOracle) {
  Model m = identity_embed_model(8, 3, 2, 79);
  const std::size_t n_feat = 5, n_out = 2;
  Matrix d_in = random_matrix(8, n_feat, 83);
  Matrix rows_out = random_matrix(n_out, 3, 89);

  std::vector<Matrix> got = feature_transform(m, d_in, rows_out);

  for (std::size_t a = 0; a < n_out; ++a)
    for (std::size_t b = 0; b < n_feat; ++b)
      for (std::size_t c = 0; c < n_feat; ++c) {
        double expected = 0.0;
        for (std::size_t neuron = 0; neuron < 3; ++neuron)
          for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
              const double b_nij = 0.5 * (m.W(neuron, i) * m.V(neuron, j) +
                                          m.W(neuron, j) * m.V(neuron, i));
              expected += rows_out(a, neuron) * b_nij * d_in(i, b) * d_in(j, c);
            }
        EXPECT_NEAR(got[a](b, c), expected, 1e-10 * std::max(1.0, std::fabs(expected)));
      }
}

std::vector<std::pair<Vector, Spectrum>> spectra_for_stack(const Model& m, const Matrix& u_stack) {
  std::vector<std::pair<Vector, Spectrum>> out;
  for (std::size_t k = 0; k < u_stack.rows(); ++k) {
    Vector u = u_stack.row_copy(k);
    out.emplace_back(u, symmetric_eig(interaction_matrix(m, u)));
  }
  return out;
}

TEST(ReexpressTensor, IdentityBasisRecoversSlices) {
  Model m = identity_embed_model(6, 4, 3, 97);
  Matrix u_stack = Matrix::identity(3);
  ReexpressedTensor t = reexpress_tensor(spectra_for_stack(m, u_stack), u_stack);
  for (std::size_t c = 0; c < 3; ++c) {
    Vector u(3, 0.0);
    u[c] = 1.0;
    Matrix expected = interaction_matrix(m, u);
    EXPECT_LE(frobenius_distance(t.slices[c], expected) / std::max(1.0, frobenius_norm(expected)),
              1e-8);
  }
}

TEST(ReexpressTensor, DuplicateRowIsRankDeficient) {
  Model m = identity_embed_model(4, 3, 3, 101);
  Matrix u_stack(3, 3);
  u_stack.set_row(0, Vector{1.0, 0.0, 0.0});
  u_stack.set_row(1, Vector{1.0, 0.0, 0.0});
  u_stack.set_row(2, Vector{0.0, 0.0, 1.0});
  EXPECT_THROW(reexpress_tensor(spectra_for_stack(m, u_stack), u_stack), InvalidInput);
}

TEST(ReexpressTensor, RandomOrthogonalStackRecovery) {
  Model m = identity_embed_model(6, 5, 10, 103);
  Matrix u_stack = symmetric_eig(random_symmetric(10, 107)).eigenvectors;  // orthogonal 10x10
  auto spectra = spectra_for_stack(m, u_stack);
  ReexpressedTensor t = reexpress_tensor(spectra, u_stack);
  for (std::size_t k = 0; k < 10; ++k) {
    Matrix recovered = t.contract(u_stack.row_copy(k));
    Matrix expected = spectra[k].second.reconstruct();
    EXPECT_LE(frobenius_distance(recovered, expected) / std::max(1.0, frobenius_norm(expected)),
              1e-8);
  }
}

TEST(ReexpressTensor, OvercompleteStackRecovery) {
  // more directions than output dims still recovers every Q_k
  Model m = identity_embed_model(5, 4, 3, 109);
  Matrix u_stack = random_matrix(7, 3, 113);
  auto spectra = spectra_for_stack(m, u_stack);
  ReexpressedTensor t = reexpress_tensor(spectra, u_stack);
  for (std::size_t k = 0; k < 7; ++k) {
    Matrix recovered = t.contract(u_stack.row_copy(k));
    Matrix expected = spectra[k].second.reconstruct();
    EXPECT_LE(frobenius_distance(recovered, expected) / std::max(1.0, frobenius_norm(expected)),
              1e-8);
  }
}

Dataset random_dataset(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Dataset d;
  d.images = Matrix(n, dim);
  CounterRng rng(seed, RngStream::kGeneric);
  for (std::size_t i = 0; i < d.images.size(); ++i)
    d.images.data()[i] = 0.5 + 0.25 * rng.normal();
  d.labels.assign(n, 0);
  return d;
}

TEST(LowRankCorrelation, FullRankIsExactlyOne) {
  ModelConfig cfg;
  cfg.input_dim = 6;
  cfg.embed_dim = 5;
  cfg.n_classes = 2;
  Model m = random_model(cfg, 127);
  std::vector<ClassSpectrum> spectra{class_spectrum(m, 0), class_spectrum(m, 1)};
  Dataset data = random_dataset(50, 6, 131);
  CorrelationReport rep = low_rank_correlation(m, spectra, 5, data);
  for (double c : rep.all_corr) EXPECT_DOUBLE_EQ(c, 1.0);
  for (double c : rep.active_corr) EXPECT_DOUBLE_EQ(c, 1.0);
}

TEST(LowRankCorrelation, PlantedRankOne) {
  // single neuron, W = V: exactly one nonzero eigenpair
  Model m = identity_embed_model(5, 1, 1, 137);
  m.V = m.W;
  std::vector<ClassSpectrum> spectra{class_spectrum(m, 0)};
  Dataset data = random_dataset(60, 5, 139);
  CorrelationReport rep = low_rank_correlation(m, spectra, 1, data);
  EXPECT_GE(rep.all_corr[0], 1.0 - 1e-9);
  EXPECT_GE(rep.active_corr[0], 1.0 - 1e-9);
}

TEST(LowRankCorrelation, TooFewActiveSamplesThrows) {
  // negative-definite interaction: activations never positive
  Model m = identity_embed_model(4, 4, 1, 149);
  m.W = Matrix::identity(4);
  m.V = Matrix::identity(4);
  for (std::size_t j = 0; j < 4; ++j) m.U(0, j) = -1.0;
  std::vector<ClassSpectrum> spectra{class_spectrum(m, 0)};
  Dataset data = random_dataset(30, 4, 151);
  EXPECT_THROW(low_rank_correlation(m, spectra, 1, data), InsufficientData);
}

TEST(LowRankCorrelation, RejectsZeroK) {
  Model m = identity_embed_model(4, 2, 1, 157);
  std::vector<ClassSpectrum> spectra{class_spectrum(m, 0)};
  Dataset data = random_dataset(10, 4, 163);
  EXPECT_THROW(low_rank_correlation(m, spectra, 0, data), InvalidInput);
}

TEST(SpectrumCache, ReusesAndDistinguishes) {
  ModelConfig cfg;
  cfg.input_dim = 5;
  cfg.embed_dim = 4;
  cfg.n_classes = 2;
  Model a = random_model(cfg, 167);
  SpectrumCache cache;
  auto first = cache.get_or_compute(a, 0);
  auto second = cache.get_or_compute(a, 0);
  EXPECT_EQ(first.get(), second.get());

  Model b = a;
  b.W(0, 0) += 1.0;
  auto third = cache.get_or_compute(b, 0);
  EXPECT_NE(first.get(), third.get());
}

}  // namespace
}  // namespace bilin
