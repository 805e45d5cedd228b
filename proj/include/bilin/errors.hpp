#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bilin {

// Thrown when an argument violates a documented precondition (shape
// mismatch, out-of-range parameter, rank deficiency, ...).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or truncated on-disk data (IDX files, checkpoints, configs).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// An iterative numerical routine failed to converge within its cap.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

// Optimization diverged; carries the step at which the loss became non-finite.
class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// A statistic was requested over too few samples to be meaningful.
class InsufficientData : public std::runtime_error {
 public:
  explicit InsufficientData(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bilin
