#include "bilin/adversarial.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "testutil.hpp"

namespace bilin {
namespace {

using testutil::random_model;
using testutil::random_vector;

// E = I, one neuron per class, W = V = U = I: the top positive eigenvector of
// class c is exactly e_c, so the stack is orthonormal.
Model orthonormal_eigenvector_model(std::size_t n) {
  ModelConfig cfg;
  cfg.input_dim = n;
  cfg.embed_dim = n;
  cfg.hidden_dim = n;
  cfg.n_classes = n;
  Model m = init_model(cfg, 0);
  m.E = Matrix::identity(n);
  m.W = Matrix::identity(n);
  m.V = Matrix::identity(n);
  m.U = Matrix::identity(n);
  return m;
}

TEST(BuildMasks, OrthonormalStackGivesEigenvectorsBack) {
  Model m = orthonormal_eigenvector_model(5);
  SpectrumCache cache;
  MaskSet masks = build_masks(m, 1, kDefaultRcond, cache);
  ASSERT_EQ(masks.masks.rows(), 5u);
  for (std::size_t c = 0; c < 5; ++c)
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_NEAR(masks.masks(c, j), c == j ? 1.0 : 0.0, 1e-9);
}

TEST(BuildMasks, DuplicateEigenvectorsRejected) {
  Model m = orthonormal_eigenvector_model(4);
  // two classes read the same neuron: identical top eigenvectors
  for (std::size_t j = 0; j < 4; ++j) {
    m.U(1, j) = 0.0;
    m.U(0, j) = 0.0;
  }
  m.U(0, 2) = 1.0;
  m.U(1, 2) = 1.0;
  SpectrumCache cache;
  EXPECT_THROW(build_masks(m, 1, kDefaultRcond, cache), InvalidInput);
}

TEST(BuildMasks, DeltaPropertyOnRandomModel) {
  ModelConfig cfg;
  cfg.input_dim = 40;
  cfg.embed_dim = 12;
  cfg.n_classes = 6;
  Model m = random_model(cfg, 61);
  SpectrumCache cache;
  MaskSet masks = build_masks(m, 1, kDefaultRcond, cache);

  // rebuild the stack of top positive pixel eigenvectors
  Matrix stack(6, 40);
  for (std::size_t c = 0; c < 6; ++c) {
    auto cs = cache.get_or_compute(m, c);
    ASSERT_GT(cs->spectrum.eigenvalues[0], 0.0);
    stack.set_row(c, cs->pixel_eigenvectors.row_copy(0));
  }
  for (std::size_t i = 0; i < 6; ++i) {
    Vector unnormalized = masks.masks.row_copy(i);
    for (double& v : unnormalized) v *= masks.mask_norms[i];
    for (std::size_t j = 0; j < 6; ++j) {
      const double expected = i == j ? 1.0 : 0.0;
      EXPECT_NEAR(dot(stack.row_copy(j), unnormalized), expected, 1e-8);
    }
  }
}

TEST(BuildMasks, RequiresPositiveEigenvalue) {
  Model m = orthonormal_eigenvector_model(3);
  for (std::size_t j = 0; j < 3; ++j) m.U(1, j) = -m.U(1, j);  // class 1 all-negative spectrum
  SpectrumCache cache;
  EXPECT_THROW(build_masks(m, 1, kDefaultRcond, cache), InvalidInput);
}

Dataset uniform_dataset(std::size_t n, std::size_t dim, std::uint64_t seed, double lo = 0.0,
                        double hi = 0.9) {
  CounterRng rng(seed, RngStream::kGeneric);
  Dataset d;
  d.images = Matrix(n, dim);
  d.labels.assign(n, 0);
  for (std::size_t i = 0; i < d.images.size(); ++i)
    d.images.data()[i] = lo + (hi - lo) * rng.uniform();
  return d;
}

TEST(AttackEval, ZeroScaleEqualsCleanEvaluate) {
  Model m = orthonormal_eigenvector_model(4);
  Dataset data = uniform_dataset(40, 4, 67);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 4; ++j)
      if (data.images(i, j) > data.images(i, best)) best = j;
    data.labels[i] = int(best);
  }
  Vector mask = random_vector(4, 71);
  AttackResult attacked = attack_eval(m, data, mask, 2, 0.0);
  EXPECT_DOUBLE_EQ(attacked.accuracy, evaluate(m, data).accuracy);
}

TEST(AttackEval, SaturatedScaleSteersEverything) {
  // class 1 reads (x0 + x1)^2 / 2, class 0 reads (x2 + x3)^2 / 2
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 2;
  cfg.n_classes = 2;
  Model m = init_model(cfg, 0);
  m.E = Matrix::identity(4);
  const double r = 1.0 / std::sqrt(2.0);
  m.W = Matrix{{r, r, 0.0, 0.0}, {0.0, 0.0, r, r}};
  m.V = m.W;
  m.U = Matrix{{0.0, 1.0}, {1.0, 0.0}};

  Dataset data = uniform_dataset(50, 4, 73, 0.0, 0.9);
  Vector mask{r, r, 0.0, 0.0};
  AttackResult attacked = attack_eval(m, data, mask, 1, 10.0);
  EXPECT_DOUBLE_EQ(attacked.target_rate, 1.0);
}

TEST(AttackEval, ClampsToPixelRange) {
  Model m = orthonormal_eigenvector_model(3);
  Dataset data;
  data.images = Matrix(4, 3);
  data.images.set_row(0, Vector{0.2, 0.8, 0.5});
  data.images.set_row(1, Vector{0.9, 0.1, 0.3});
  data.images.set_row(2, Vector{0.0, 0.5, 1.0});
  data.images.set_row(3, Vector{0.4, 0.4, 0.4});
  data.labels = {1, 0, 2, 0};
  Vector mask{2.0, -2.0, 0.5};

  AttackResult got = attack_eval(m, data, mask, 0, 1.0);
  // reproduce with explicit clamping and the per-example forward pass
  std::size_t correct = 0, steered = 0, non_target = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    Vector x(3);
    for (std::size_t j = 0; j < 3; ++j)
      x[j] = std::clamp(data.images(i, j) + mask[j], 0.0, 1.0);
    Vector z = forward(m, x);
    std::size_t pred = argmax_lowest_tie(z.data(), 3);
    if (pred == std::size_t(data.labels[i])) ++correct;
    if (data.labels[i] != 0) {
      ++non_target;
      if (pred == 0) ++steered;
    }
  }
  EXPECT_DOUBLE_EQ(got.accuracy, double(correct) / 4.0);
  EXPECT_DOUBLE_EQ(got.target_rate, double(steered) / double(non_target));
}

TEST(PermutedBaseline, ConstantMaskUnchanged) {
  Vector mask(9, 0.25);
  Vector perm = permuted_baseline(mask, 1);
  EXPECT_TRUE(mask == perm);
}

TEST(PermutedBaseline, PreservesEntryMultiset) {
  Vector mask = random_vector(50, 79);
  Vector perm = permuted_baseline(mask, 2);
  EXPECT_FALSE(mask == perm);  // astronomically unlikely to be fixed
  Vector a = mask, b = perm;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_TRUE(a == b);
  EXPECT_DOUBLE_EQ(norm1(mask), norm1(perm));
  EXPECT_DOUBLE_EQ(norm2(mask) * norm2(mask), norm2(perm) * norm2(perm));
}

TEST(PermutedBaseline, SeedDeterminesPermutation) {
  Vector mask = random_vector(20, 83);
  EXPECT_TRUE(permuted_baseline(mask, 5) == permuted_baseline(mask, 5));
  EXPECT_FALSE(permuted_baseline(mask, 5) == permuted_baseline(mask, 6));
}

TEST(PermutedBaseline, MeanTargetRateBelowTrueMask) {
  // structured mask on the toy model: permutations dilute it half the time
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 2;
  cfg.n_classes = 2;
  Model m = init_model(cfg, 0);
  m.E = Matrix::identity(4);
  const double r = 1.0 / std::sqrt(2.0);
  m.W = Matrix{{r, r, 0.0, 0.0}, {0.0, 0.0, r, r}};
  m.V = m.W;
  m.U = Matrix{{0.0, 1.0}, {1.0, 0.0}};

  Dataset data = uniform_dataset(200, 4, 89, 0.0, 0.9);
  Vector mask{r, r, 0.0, 0.0};
  const double scale = 0.8;
  const double true_rate = attack_eval(m, data, mask, 1, scale).target_rate;
  double mean_rate = 0.0;
  for (int p = 0; p < 100; ++p)
    mean_rate += attack_eval(m, data, permuted_baseline(mask, std::uint64_t(p)), 1, scale).target_rate;
  mean_rate /= 100.0;
  EXPECT_LT(mean_rate, true_rate);
}

TEST(EdgeMask, ThresholdOneKeepsSupport) {
  Dataset data;
  data.images = Matrix(4, 3);
  data.images.set_row(0, Vector{0.5, 0.0, 0.1});
  data.images.set_row(1, Vector{0.5, 0.2, 0.0});
  data.images.set_row(2, Vector{0.5, 0.0, 0.0});
  data.images.set_row(3, Vector{0.5, 0.1, 0.2});
  data.labels = {0, 0, 0, 0};
  Vector mask{0.0, 3.0, 4.0};  // avoids the always-active pixel anyway

  Vector out = edge_mask(data, mask, 1.0);
  EXPECT_NEAR(out[1], 0.6, 1e-12);  // 3/5
  EXPECT_NEAR(out[2], 0.8, 1e-12);  // 4/5
}

TEST(EdgeMask, AllPixelsActiveRejected) {
  Dataset data;
  data.images = Matrix(3, 2, 0.7);
  data.labels = {0, 0, 0};
  EXPECT_THROW(edge_mask(data, Vector{1.0, 1.0}, 0.5), InvalidInput);
}

TEST(EdgeMask, FrequentPixelsAreZeroed) {
  Dataset data;
  data.images = Matrix(10, 4);
  for (std::size_t i = 0; i < 10; ++i) {
    data.images(i, 0) = 0.9;               // always active
    data.images(i, 1) = i < 5 ? 0.5 : 0.0;  // 50% active
    data.images(i, 2) = i == 0 ? 0.5 : 0.0; // 10% active
    data.images(i, 3) = 0.0;                // never active
  }
  data.labels.assign(10, 0);

  Vector mask{1.0, 1.0, 1.0, 1.0};
  Vector out = edge_mask(data, mask, 0.2);
  EXPECT_DOUBLE_EQ(out[0], 0.0);
  EXPECT_DOUBLE_EQ(out[1], 0.0);
  EXPECT_GT(out[2], 0.0);  // below the 20% activity bar
  EXPECT_GT(out[3], 0.0);
  EXPECT_NEAR(norm2(out), 1.0, 1e-12);
}

}  // namespace
}  // namespace bilin
