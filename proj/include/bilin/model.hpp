#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "bilin/errors.hpp"
#include "bilin/hash.hpp"
#include "bilin/matrix.hpp"
#include "bilin/rng.hpp"

namespace bilin {

struct ModelConfig {
  std::size_t input_dim = 784;
  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 0;  // 0 means "same as embed_dim"
  std::size_t n_classes = 10;
  bool use_bias = false;

  std::size_t hidden() const { return hidden_dim ? hidden_dim : embed_dim; }

  void validate() const {
    if (input_dim < 1 || embed_dim < 1 || hidden() < 1 || n_classes < 1)
      throw InvalidInput("ModelConfig: all dimensions must be >= 1");
  }

  std::string canonical_text() const {
    return "model{input_dim=" + std::to_string(input_dim) +
           ",embed_dim=" + std::to_string(embed_dim) +
           ",hidden_dim=" + std::to_string(hidden()) +
           ",n_classes=" + std::to_string(n_classes) +
           ",use_bias=" + (use_bias ? "1" : "0") + "}";
  }
};

// Embedding -> bilinear pair -> head. Immutable after construction; every
// derived analysis is a pure function of the weights.
struct Model {
  ModelConfig config;
  Matrix E;  // embed_dim x input_dim
  Matrix W;  // hidden x embed_dim
  Matrix V;  // hidden x embed_dim
  std::optional<Vector> b1, b2;  // hidden, present iff config.use_bias
  Matrix U;  // n_classes x hidden
  std::uint64_t seed = 0;
  std::string config_hash;
  // set by augment_bias: the final embedding coordinate is pinned to 1
  bool augmented = false;

  void validate() const {
    config.validate();
    const std::size_t h = config.hidden();
    if (E.rows() != config.embed_dim || E.cols() != config.input_dim ||
        W.rows() != h || W.cols() != config.embed_dim ||
        V.rows() != h || V.cols() != config.embed_dim ||
        U.rows() != config.n_classes || U.cols() != h)
      throw InvalidInput("Model: weight shapes inconsistent with config");
    if (config.use_bias != (b1.has_value() && b2.has_value()))
      throw InvalidInput("Model: biases must be present iff use_bias");
    if (b1 && (b1->size() != h || b2->size() != h))
      throw InvalidInput("Model: bias length mismatch");
  }

  // embed + pinned constant coordinate when augmented
  Vector embed(const Vector& x) const {
    Vector e = matvec(E, x);
    if (augmented) e[config.embed_dim - 1] = 1.0;
    return e;
  }

  // Dimension of the space interaction matrices live in: the embedding space,
  // extended by the constant coordinate when biases are present.
  std::size_t interaction_dim() const {
    return config.embed_dim + (config.use_bias ? 1 : 0);
  }

  // Embedded input in the space interaction matrices act on.
  Vector interaction_input(const Vector& x) const {
    Vector e = embed(x);
    if (config.use_bias) e.push_back(1.0);
    return e;
  }
};

// Weight entries i.i.d. normal with std 1/sqrt(fan_in), seeded via the init
// stream. Biases start at zero.
inline Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t h = config.hidden();
  Model m;
  m.config = config;
  m.seed = seed;
  m.config_hash = sha256_hex(config.canonical_text());

  CounterRng rng(seed, RngStream::kInit);
  auto fill = [&rng](Matrix& mat, std::size_t fan_in) {
    const double std_dev = 1.0 / std::sqrt(double(fan_in));
    for (std::size_t i = 0; i < mat.size(); ++i) mat.data()[i] = std_dev * rng.normal();
  };
  m.E = Matrix(config.embed_dim, config.input_dim);
  fill(m.E, config.input_dim);
  m.W = Matrix(h, config.embed_dim);
  fill(m.W, config.embed_dim);
  m.V = Matrix(h, config.embed_dim);
  fill(m.V, config.embed_dim);
  m.U = Matrix(config.n_classes, h);
  fill(m.U, h);
  if (config.use_bias) {
    m.b1 = Vector(h, 0.0);
    m.b2 = Vector(h, 0.0);
  }
  return m;
}

// logits = U ((W E x + b1) .* (V E x + b2)); fixed left-to-right accumulation
// so algebraically equal formulations can be compared bit for bit.
inline Vector forward(const Model& model, const Vector& x) {
  if (x.size() != model.config.input_dim)
    throw InvalidInput("forward: input length != input_dim");
  Vector e = model.embed(x);
  Vector a = matvec(model.W, e);
  Vector c = matvec(model.V, e);
  if (model.b1)
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += (*model.b1)[i];
  if (model.b2)
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += (*model.b2)[i];
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= c[i];
  return matvec(model.U, a);
}

// Fold the biases into an extra embedding coordinate pinned to one:
// W' = [W | b1], V' = [V | b2], embedded input [E x, 1]. Forward outputs are
// bitwise identical to the biased model's.
inline Model augment_bias(const Model& model) {
  if (!model.config.use_bias) throw InvalidInput("augment_bias: model has no biases");
  model.validate();
  const std::size_t d = model.config.embed_dim;
  const std::size_t h = model.config.hidden();

  Model out;
  out.config = model.config;
  out.config.embed_dim = d + 1;
  out.config.hidden_dim = h;
  out.config.use_bias = false;
  out.seed = model.seed;
  out.config_hash = sha256_hex(out.config.canonical_text());
  out.augmented = true;

  out.E = Matrix(d + 1, model.config.input_dim);
  for (std::size_t i = 0; i < d; ++i)
    std::copy(model.E.row(i), model.E.row(i) + model.E.cols(), out.E.row(i));
  out.W = Matrix(h, d + 1);
  out.V = Matrix(h, d + 1);
  for (std::size_t i = 0; i < h; ++i) {
    std::copy(model.W.row(i), model.W.row(i) + d, out.W.row(i));
    out.W(i, d) = (*model.b1)[i];
    std::copy(model.V.row(i), model.V.row(i) + d, out.V.row(i));
    out.V(i, d) = (*model.b2)[i];
  }
  out.U = model.U;
  return out;
}

// Interaction matrix bypassing the head: direction t lives in hidden space.
//   Q = 1/2 (W^T diag(t) V + V^T diag(t) W)
// computed without materializing the hidden x d x d tensor. For biased models
// the matrix is built over the bias-augmented weights, so x_e = [E x, 1]
// satisfies x_e^T Q x_e = t . (bilinear activations).
inline Matrix interaction_matrix_hidden(const Model& model, const Vector& t) {
  if (t.size() != model.config.hidden())
    throw InvalidInput("interaction_matrix_hidden: direction length != hidden_dim");
  if (model.config.use_bias) return interaction_matrix_hidden(augment_bias(model), t);
  const std::size_t d = model.config.embed_dim;
  const std::size_t h = model.config.hidden();
  Matrix wt(h, d);
  for (std::size_t a = 0; a < h; ++a) {
    const double* w = model.W.row(a);
    double* o = wt.row(a);
    for (std::size_t j = 0; j < d; ++j) o[j] = t[a] * w[j];
  }
  Matrix q = matmul_tn(wt, model.V);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      const double s = 0.5 * (q(i, j) + q(j, i));
      q(i, j) = s;
      q(j, i) = s;
    }
  return q;
}

// Symmetric interaction matrix for an output direction u over the classes;
// the head folds in via t = U^T u.
inline Matrix interaction_matrix(const Model& model, const Vector& u) {
  if (u.size() != model.config.n_classes)
    throw InvalidInput("interaction_matrix: direction length != n_classes");
  return interaction_matrix_hidden(model, matvec_t(model.U, u));
}

// x^T (1/2 (B - B^T)) x; identically zero in exact arithmetic, returned so
// tests can bound the floating-point residue.
inline double antisymmetric_vanishing_check(const Matrix& b, const Vector& x) {
  if (b.rows() != b.cols() || x.size() != b.rows())
    throw InvalidInput("antisymmetric_vanishing_check: shape mismatch");
  return quadratic_form(antisymmetric_part(b), x, x);
}

}  // namespace bilin
