#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bilin/data.hpp"
#include "bilin/errors.hpp"
#include "bilin/hash.hpp"
#include "bilin/matrix.hpp"
#include "bilin/model.hpp"
#include "bilin/rng.hpp"

namespace bilin {

enum class Schedule { kCosineAnnealing, kConstant };

inline std::string schedule_name(Schedule s) {
  return s == Schedule::kCosineAnnealing ? "cosine_annealing" : "constant";
}

inline Schedule schedule_from_name(const std::string& s) {
  if (s == "cosine_annealing") return Schedule::kCosineAnnealing;
  if (s == "constant") return Schedule::kConstant;
  throw InvalidInput("unknown schedule: " + s);
}

struct Augmentations {
  int translate_px = 0;
  double rotate_deg = 0.0;
  double blur_sigma = 0.0;
};

struct TrainConfig {
  double noise_std = 0.0;  // pixel-space Gaussian std
  // Alternative "noise norm" parameterization: std = norm / sqrt(input_dim).
  std::optional<double> noise_norm;
  double weight_decay = 0.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 2048;
  std::size_t epochs = 50;
  Schedule schedule = Schedule::kCosineAnnealing;
  std::uint64_t seed = 0;
  std::optional<Augmentations> augmentations;

  double effective_noise_std(std::size_t input_dim) const {
    if (noise_norm) return *noise_norm / std::sqrt(double(input_dim));
    return noise_std;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw InvalidInput("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw InvalidInput("TrainConfig: batch_size must be >= 1");
    if (noise_std < 0.0 || (noise_norm && *noise_norm < 0.0))
      throw InvalidInput("TrainConfig: noise must be >= 0");
  }

  std::string canonical_text() const {
    std::string s = "train{noise_std=" + std::to_string(noise_std);
    if (noise_norm) s += ",noise_norm=" + std::to_string(*noise_norm);
    s += ",weight_decay=" + std::to_string(weight_decay) +
         ",learning_rate=" + std::to_string(learning_rate) +
         ",batch_size=" + std::to_string(batch_size) + ",epochs=" + std::to_string(epochs) +
         ",schedule=" + schedule_name(schedule) + ",seed=" + std::to_string(seed);
    if (augmentations)
      s += ",augment{" + std::to_string(augmentations->translate_px) + "," +
           std::to_string(augmentations->rotate_deg) + "," +
           std::to_string(augmentations->blur_sigma) + "}";
    return s + "}";
  }
};

// x + eps with eps ~ N(0, noise_std^2) i.i.d.; the expected L2 norm of eps is
// noise_std * sqrt(len).
inline Vector gaussian_input_noise(const Vector& x, double noise_std, CounterRng& rng) {
  if (noise_std < 0.0) throw InvalidInput("gaussian_input_noise: std must be >= 0");
  Vector out = x;
  if (noise_std == 0.0) return out;
  for (double& v : out) v += noise_std * rng.normal();
  return out;
}

namespace detail {

inline double bilinear_sample(const Vector& img, std::size_t side, double sx, double sy) {
  // zero padding outside the grid
  const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
  const double fx = sx - x0, fy = sy - y0;
  auto at = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= int(side) || y >= int(side)) return 0.0;
    return img[std::size_t(y) * side + std::size_t(x)];
  };
  return (1 - fx) * (1 - fy) * at(x0, y0) + fx * (1 - fy) * at(x0 + 1, y0) +
         (1 - fx) * fy * at(x0, y0 + 1) + fx * fy * at(x0 + 1, y0 + 1);
}

inline Vector gaussian_blur(const Vector& img, std::size_t side, double sigma) {
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> w(std::size_t(radius) + 1);
  for (int i = 0; i <= radius; ++i) w[std::size_t(i)] = std::exp(-0.5 * (double(i) * i) / (sigma * sigma));

  // separable passes; weights renormalized over in-bounds taps so constant
  // images stay constant
  auto pass = [&](const Vector& src, bool horizontal) {
    Vector dst(src.size());
    for (int y = 0; y < int(side); ++y)
      for (int x = 0; x < int(side); ++x) {
        double acc = 0.0, wsum = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          int xx = horizontal ? x + k : x;
          int yy = horizontal ? y : y + k;
          if (xx < 0 || yy < 0 || xx >= int(side) || yy >= int(side)) continue;
          const double wk = w[std::size_t(std::abs(k))];
          acc += wk * src[std::size_t(yy) * side + std::size_t(xx)];
          wsum += wk;
        }
        dst[std::size_t(y) * side + std::size_t(x)] = acc / wsum;
      }
    return dst;
  };
  return pass(pass(img, true), false);
}

}  // namespace detail

// Geometric augmentation of a square image: uniformly sampled integer shift
// and continuous rotation (zero padding, bilinear resampling), then Gaussian
// blur with a separable kernel truncated at 3 sigma.
inline Vector augment(const Vector& image, const Augmentations& aug, CounterRng& rng) {
  if (aug.translate_px < 0 || aug.translate_px > 7)
    throw InvalidInput("augment: translate_px must be in [0, 7]");
  if (aug.rotate_deg < 0.0 || aug.rotate_deg > 45.0)
    throw InvalidInput("augment: rotate_deg must be in [0, 45]");
  if (aug.blur_sigma < 0.0 || aug.blur_sigma > 2.0)
    throw InvalidInput("augment: blur_sigma must be in [0, 2]");
  const std::size_t side = std::size_t(std::lround(std::sqrt(double(image.size()))));
  if (side * side != image.size()) throw InvalidInput("augment: image is not square");

  const int dx = int(rng.range(-aug.translate_px, aug.translate_px));
  const int dy = int(rng.range(-aug.translate_px, aug.translate_px));
  const double theta = aug.rotate_deg == 0.0
                           ? 0.0
                           : (2.0 * rng.uniform() - 1.0) * aug.rotate_deg * 3.14159265358979323846 / 180.0;

  Vector out(image.size());
  const double c = std::cos(theta), s = std::sin(theta);
  const double center = (double(side) - 1.0) / 2.0;
  for (std::size_t oy = 0; oy < side; ++oy)
    for (std::size_t ox = 0; ox < side; ++ox) {
      // invert: output = rotate then shift of the input
      const double rx = double(ox) - dx - center;
      const double ry = double(oy) - dy - center;
      const double sx = c * rx + s * ry + center;
      const double sy = -s * rx + c * ry + center;
      out[oy * side + ox] = detail::bilinear_sample(image, side, sx, sy);
    }
  if (aug.blur_sigma > 0.0) out = detail::gaussian_blur(out, side, aug.blur_sigma);
  return out;
}

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled, multiplicative
};

// One decoupled-weight-decay Adam update; decay applies as a pure
// multiplicative shrink (1 - lr*wd) before the moment step.
inline void adamw_step(double* param, const double* grad, double* m, double* v, std::size_t n,
                       const AdamParams& p, std::size_t t) {
  const double bc1 = 1.0 - std::pow(p.beta1, double(t));
  const double bc2 = 1.0 - std::pow(p.beta2, double(t));
  const double shrink = 1.0 - p.learning_rate * p.weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * grad[i];
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] = shrink * param[i] - p.learning_rate * mhat / (std::sqrt(vhat) + p.epsilon);
  }
}

// Batched forward pass used by training and evaluation; one row per example.
inline Matrix forward_batch(const Model& model, const Matrix& x) {
  if (x.cols() != model.config.input_dim) throw InvalidInput("forward_batch: input_dim mismatch");
  Matrix eb = matmul_nt(x, model.E);
  if (model.augmented)
    for (std::size_t i = 0; i < eb.rows(); ++i) eb(i, model.config.embed_dim - 1) = 1.0;
  Matrix a = matmul_nt(eb, model.W);
  Matrix c = matmul_nt(eb, model.V);
  if (model.b1)
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) {
        a(i, j) += (*model.b1)[j];
        c(i, j) += (*model.b2)[j];
      }
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= c.data()[i];
  return matmul_nt(a, model.U);
}

struct Gradients {
  double loss = 0.0;
  Matrix dE, dW, dV, dU;
  Vector db1, db2;
};

// Mean softmax cross-entropy over the batch and its reverse-mode gradients,
// backpropagated through the exact batched forward expression.
inline Gradients loss_and_gradients(const Model& model, const Matrix& x,
                                    const std::vector<int>& labels) {
  const std::size_t batch = x.rows();
  if (labels.size() != batch) throw InvalidInput("loss_and_gradients: label count mismatch");
  const std::size_t n_classes = model.config.n_classes;

  Matrix eb = matmul_nt(x, model.E);
  if (model.augmented)
    for (std::size_t i = 0; i < eb.rows(); ++i) eb(i, model.config.embed_dim - 1) = 1.0;
  Matrix a = matmul_nt(eb, model.W);
  Matrix c = matmul_nt(eb, model.V);
  if (model.b1)
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) {
        a(i, j) += (*model.b1)[j];
        c(i, j) += (*model.b2)[j];
      }
  Matrix h = a;
  for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] *= c.data()[i];
  Matrix z = matmul_nt(h, model.U);

  // softmax cross-entropy; dz = (softmax - onehot) / batch
  Gradients g;
  Matrix dz(batch, n_classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* zi = z.row(i);
    double zmax = zi[0];
    for (std::size_t j = 1; j < n_classes; ++j) zmax = std::max(zmax, zi[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n_classes; ++j) denom += std::exp(zi[j] - zmax);
    const int y = labels[i];
    if (y < 0 || std::size_t(y) >= n_classes)
      throw InvalidInput("loss_and_gradients: label out of range");
    loss += -(zi[std::size_t(y)] - zmax - std::log(denom));
    for (std::size_t j = 0; j < n_classes; ++j) {
      const double p = std::exp(zi[j] - zmax) / denom;
      dz(i, j) = (p - (std::size_t(y) == j ? 1.0 : 0.0)) / double(batch);
    }
  }
  g.loss = loss / double(batch);

  g.dU = matmul_tn(dz, h);
  Matrix dh = matmul(dz, model.U);
  Matrix da = dh, dc = dh;
  for (std::size_t i = 0; i < dh.size(); ++i) {
    da.data()[i] = dh.data()[i] * c.data()[i];
    dc.data()[i] = dh.data()[i] * a.data()[i];
  }
  g.dW = matmul_tn(da, eb);
  g.dV = matmul_tn(dc, eb);
  if (model.b1) {
    g.db1.assign(model.config.hidden(), 0.0);
    g.db2.assign(model.config.hidden(), 0.0);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < da.cols(); ++j) {
        g.db1[j] += da(i, j);
        g.db2[j] += dc(i, j);
      }
  }
  Matrix deb = matmul(da, model.W);
  detail::gemm_acc(deb, dc, false, model.V, false);
  if (model.augmented)
    for (std::size_t i = 0; i < deb.rows(); ++i) deb(i, model.config.embed_dim - 1) = 0.0;
  g.dE = matmul_tn(deb, x);
  return g;
}

struct EvalResult {
  double accuracy = 0.0;
  Vector per_class_accuracy;
};

inline std::size_t argmax_lowest_tie(const double* v, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

// Clean accuracy; inputs are never perturbed here.
inline EvalResult evaluate(const Model& model, const Dataset& data) {
  const std::size_t n = data.size();
  const std::size_t n_classes = model.config.n_classes;
  std::vector<std::size_t> correct(n_classes, 0), total(n_classes, 0);

  const std::size_t chunk = 2048;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t b = std::min(chunk, n - start);
    Matrix x(b, data.images.cols());
    for (std::size_t i = 0; i < b; ++i)
      std::copy(data.images.row(start + i), data.images.row(start + i) + data.images.cols(),
                x.row(i));
    Matrix z = forward_batch(model, x);
    for (std::size_t i = 0; i < b; ++i) {
      const int y = data.labels[start + i];
      if (y < 0 || std::size_t(y) >= n_classes) throw InvalidInput("evaluate: label out of range");
      ++total[std::size_t(y)];
      if (argmax_lowest_tie(z.row(i), n_classes) == std::size_t(y)) {
        ++hits;
        ++correct[std::size_t(y)];
      }
    }
  }
  EvalResult r;
  r.accuracy = n ? double(hits) / double(n) : 0.0;
  r.per_class_accuracy.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c)
    r.per_class_accuracy[c] = total[c] ? double(correct[c]) / double(total[c]) : 0.0;
  return r;
}

// Deterministic AdamW training of the three-stage classifier: fixed shuffle,
// fixed reduction order, fresh input noise per example per epoch, cosine
// annealed learning rate, decoupled weight decay on E, W, V, U (not biases).
inline Model train(const TrainConfig& config, const ModelConfig& model_config,
                   const Dataset& data) {
  config.validate();
  model_config.validate();
  if (data.size() == 0) throw InvalidInput("train: dataset is empty");
  if (data.images.rows() != data.size()) throw InvalidInput("train: image/label count mismatch");
  for (int y : data.labels)
    if (y < 0 || std::size_t(y) >= model_config.n_classes)
      throw InvalidInput("train: label out of range");

  Model model = init_model(model_config, config.seed);
  model.config_hash = sha256_hex(model_config.canonical_text() + ";" + config.canonical_text());

  const std::size_t n = data.size();
  const std::size_t batch_size = std::min(config.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const double noise_std = config.effective_noise_std(model_config.input_dim);

  CounterRng shuffle_rng(config.seed, RngStream::kShuffle);
  CounterRng noise_rng(config.seed, RngStream::kNoise);
  CounterRng augment_rng(config.seed, RngStream::kAugment);

  struct Moments {
    Vector m, v;
    explicit Moments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  };
  Moments mE(model.E.size()), mW(model.W.size()), mV(model.V.size()), mU(model.U.size());
  Moments mB1(model.b1 ? model.b1->size() : 0), mB2(model.b2 ? model.b2->size() : 0);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch_size, ++step) {
      const std::size_t b = std::min(batch_size, n - start);
      Matrix x(b, model_config.input_dim);
      std::vector<int> y(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = order[start + i];
        Vector img = data.images.row_copy(idx);
        if (config.augmentations) img = augment(img, *config.augmentations, augment_rng);
        if (noise_std > 0.0) img = gaussian_input_noise(img, noise_std, noise_rng);
        x.set_row(i, img);
        y[i] = data.labels[idx];
      }

      Gradients g = loss_and_gradients(model, x, y);
      if (!std::isfinite(g.loss)) throw TrainingFailure("train: loss diverged", step);

      double lr = config.learning_rate;
      if (config.schedule == Schedule::kCosineAnnealing)
        lr *= 0.5 * (1.0 + std::cos(3.14159265358979323846 * double(step) / double(total_steps)));

      AdamParams decayed{lr, 0.9, 0.999, 1e-8, config.weight_decay};
      AdamParams plain{lr, 0.9, 0.999, 1e-8, 0.0};
      const std::size_t t = step + 1;
      adamw_step(model.E.data(), g.dE.data(), mE.m.data(), mE.v.data(), model.E.size(), decayed, t);
      adamw_step(model.W.data(), g.dW.data(), mW.m.data(), mW.v.data(), model.W.size(), decayed, t);
      adamw_step(model.V.data(), g.dV.data(), mV.m.data(), mV.v.data(), model.V.size(), decayed, t);
      adamw_step(model.U.data(), g.dU.data(), mU.m.data(), mU.v.data(), model.U.size(), decayed, t);
      if (model.b1) {
        adamw_step(model.b1->data(), g.db1.data(), mB1.m.data(), mB1.v.data(), model.b1->size(),
                   plain, t);
        adamw_step(model.b2->data(), g.db2.data(), mB2.m.data(), mB2.v.data(), model.b2->size(),
                   plain, t);
      }
    }
  }
  return model;
}

}  // namespace bilin
