#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>

#include "bilin/matrix.hpp"
#include "bilin/model.hpp"
#include "bilin/rng.hpp"

namespace bilin::testutil {

class TempDir {
 public:
  TempDir() {
    dir_ = std::filesystem::temp_directory_path() /
           ("bilin_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string root() const { return dir_.string(); }

 private:
  std::filesystem::path dir_;
  static inline int counter_ = 0;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            double scale = 1.0) {
  CounterRng rng(seed, RngStream::kGeneric);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Matrix random_symmetric(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Matrix m = random_matrix(n, n, seed, scale);
  return symmetric_part(m);
}

inline Vector random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed, RngStream::kGeneric);
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline Model random_model(const ModelConfig& config, std::uint64_t seed,
                          bool random_biases = false) {
  Model m = init_model(config, seed);
  if (config.use_bias && random_biases) {
    CounterRng rng(seed ^ 0xb1a5b1a5ull, RngStream::kGeneric);
    for (double& b : *m.b1) b = 0.3 * rng.normal();
    for (double& b : *m.b2) b = 0.3 * rng.normal();
  }
  return m;
}

}  // namespace bilin::testutil
