#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilin/errors.hpp"
#include "bilin/hash.hpp"
#include "bilin/linalg.hpp"
#include "bilin/matrix.hpp"
#include "bilin/model.hpp"
#include "bilin/train.hpp"

namespace bilin {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t len, std::string origin)
      : data_(data), len_(len), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == len_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > len_) throw FormatError("truncated file: " + origin_);
  }
  const std::uint8_t* data_;
  std::size_t len_, pos_ = 0;
  std::string origin_;
};

inline void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
}

inline Matrix get_matrix(Reader& r) {
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  if (rows > (1u << 24) || cols > (1u << 24)) throw FormatError("matrix dimensions implausible");
  Matrix m{std::size_t(rows), std::size_t(cols)};
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  return m;
}

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

// Checkpoint layout: magic "BLNR", version u32, config block, then each
// matrix as (rows u64, cols u64, row-major little-endian 64-bit floats).
inline std::vector<std::uint8_t> checkpoint_bytes(const Model& model) {
  model.validate();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'B', 'L', 'N', 'R'});
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, model.config.input_dim);
  detail::put_u64(out, model.config.embed_dim);
  detail::put_u64(out, model.config.hidden());
  detail::put_u64(out, model.config.n_classes);
  out.push_back(model.config.use_bias ? 1 : 0);
  out.push_back(model.augmented ? 1 : 0);
  detail::put_u64(out, model.seed);
  detail::put_u32(out, std::uint32_t(model.config_hash.size()));
  out.insert(out.end(), model.config_hash.begin(), model.config_hash.end());

  detail::put_matrix(out, model.E);
  detail::put_matrix(out, model.W);
  detail::put_matrix(out, model.V);
  if (model.config.use_bias) {
    Matrix b1(1, model.b1->size());
    b1.set_row(0, *model.b1);
    Matrix b2(1, model.b2->size());
    b2.set_row(0, *model.b2);
    detail::put_matrix(out, b1);
    detail::put_matrix(out, b2);
  }
  detail::put_matrix(out, model.U);
  return out;
}

inline void save_checkpoint(const Model& model, const std::string& path) {
  const auto bytes = checkpoint_bytes(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint: " + path);
}

inline Model checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes,
                                   const std::string& origin) {
  detail::Reader r(bytes.data(), bytes.size(), origin);
  if (r.bytes(4) != "BLNR") throw FormatError("bad checkpoint magic: " + origin);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " + origin);

  Model m;
  m.config.input_dim = std::size_t(r.u64());
  m.config.embed_dim = std::size_t(r.u64());
  m.config.hidden_dim = std::size_t(r.u64());
  m.config.n_classes = std::size_t(r.u64());
  m.config.use_bias = r.bytes(1)[0] != 0;
  m.augmented = r.bytes(1)[0] != 0;
  m.seed = r.u64();
  const std::uint32_t hash_len = r.u32();
  if (hash_len > 1024) throw FormatError("implausible hash length: " + origin);
  m.config_hash = r.bytes(hash_len);

  m.E = detail::get_matrix(r);
  m.W = detail::get_matrix(r);
  m.V = detail::get_matrix(r);
  if (m.config.use_bias) {
    Matrix b1 = detail::get_matrix(r);
    Matrix b2 = detail::get_matrix(r);
    m.b1 = Vector(b1.data(), b1.data() + b1.size());
    m.b2 = Vector(b2.data(), b2.data() + b2.size());
  }
  m.U = detail::get_matrix(r);
  if (!r.at_end()) throw FormatError("trailing bytes in checkpoint: " + origin);
  if (!m.E.all_finite() || !m.W.all_finite() || !m.V.all_finite() || !m.U.all_finite())
    throw FormatError("checkpoint contains non-finite weights: " + origin);
  m.validate();
  return m;
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes, path);
}

// Matrix sidecar: the checkpoint's matrix layout as a standalone file.
inline void write_matrix_sidecar(const Matrix& m, const std::string& path) {
  std::vector<std::uint8_t> out;
  detail::put_matrix(out, m);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open sidecar for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
}

inline Matrix read_matrix_sidecar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open sidecar: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  detail::Reader r(bytes.data(), bytes.size(), path);
  Matrix m = detail::get_matrix(r);
  if (!r.at_end()) throw FormatError("trailing bytes in sidecar: " + path);
  return m;
}

// Shortest round-trip decimal formatting, stable across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_spectrum_csv(const Spectrum& spectrum, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open CSV for writing: " + path);
  out << "rank,eigenvalue\n";
  for (std::size_t i = 0; i < spectrum.size(); ++i)
    out << (i + 1) << "," << format_double(spectrum.eigenvalues[i]) << "\n";
}

// P6 image with the symmetric diverging mapping: 0 -> white, +max|v| -> blue
// (59, 76, 192), -max|v| -> red (180, 4, 38), linear interpolation,
// normalized per image.
inline void write_ppm_diverging(const Vector& values, std::size_t width, std::size_t height,
                                const std::string& path) {
  if (values.size() != width * height) throw InvalidInput("write_ppm_diverging: size mismatch");
  double vmax = 0.0;
  for (double v : values) vmax = std::max(vmax, std::fabs(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open PPM for writing: " + path);
  out << "P6\n" << width << " " << height << "\n255\n";
  const double blue[3] = {59, 76, 192};
  const double red[3] = {180, 4, 38};
  const double white[3] = {255, 255, 255};
  for (double v : values) {
    const double t = vmax > 0.0 ? v / vmax : 0.0;
    unsigned char px[3];
    const double* endpoint = t >= 0.0 ? blue : red;
    const double a = std::fabs(t);
    for (int k = 0; k < 3; ++k)
      px[k] = static_cast<unsigned char>(std::lround((1.0 - a) * white[k] + a * endpoint[k]));
    out.write(reinterpret_cast<const char*>(px), 3);
  }
}

inline nlohmann::json augmentations_to_json(const Augmentations& a) {
  return {{"translate_px", a.translate_px}, {"rotate_deg", a.rotate_deg},
          {"blur_sigma", a.blur_sigma}};
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j{{"noise_std", c.noise_std},
                   {"weight_decay", c.weight_decay},
                   {"learning_rate", c.learning_rate},
                   {"batch_size", c.batch_size},
                   {"epochs", c.epochs},
                   {"schedule", schedule_name(c.schedule)},
                   {"seed", c.seed}};
  if (c.noise_norm) j["noise_norm"] = *c.noise_norm;
  if (c.augmentations) j["augmentations"] = augmentations_to_json(*c.augmentations);
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("noise_std")) c.noise_std = j.at("noise_std").get<double>();
    if (j.contains("noise_norm")) c.noise_norm = j.at("noise_norm").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("schedule")) c.schedule = schedule_from_name(j.at("schedule").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("augmentations")) {
      const auto& a = j.at("augmentations");
      Augmentations aug;
      if (a.contains("translate_px")) aug.translate_px = a.at("translate_px").get<int>();
      if (a.contains("rotate_deg")) aug.rotate_deg = a.at("rotate_deg").get<double>();
      if (a.contains("blur_sigma")) aug.blur_sigma = a.at("blur_sigma").get<double>();
      c.augmentations = aug;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad train config: ") + e.what());
  }
  return c;
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim}, {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden()}, {"n_classes", c.n_classes},
          {"use_bias", c.use_bias}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("input_dim")) c.input_dim = j.at("input_dim").get<std::size_t>();
    if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<std::size_t>();
    if (j.contains("hidden_dim")) c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    if (j.contains("n_classes")) c.n_classes = j.at("n_classes").get<std::size_t>();
    if (j.contains("use_bias")) c.use_bias = j.at("use_bias").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
  return c;
}

// One manifest per CLI run; together with the config it pins everything
// needed to reproduce the run's artifacts bit for bit. Artifact paths are
// relative to the manifest's own directory so reruns compare equal.
struct RunManifest {
  std::string command;
  std::string config_json;  // canonical dump of the effective config
  std::uint64_t seed = 0;
  std::string checkpoint_hash;  // SHA-256 of the checkpoint bytes involved
  std::vector<std::string> artifact_paths;

  nlohmann::json to_json() const {
    return {{"command", command},
            {"config_json", config_json},
            {"seed", seed},
            {"checkpoint_hash", checkpoint_hash},
            {"artifact_paths", artifact_paths}};
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open manifest for writing: " + path);
    out << to_json().dump(2) << "\n";
  }
};

}  // namespace bilin
