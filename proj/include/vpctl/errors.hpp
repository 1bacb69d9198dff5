#pragma once

#include <stdexcept>
#include <string>

namespace vpctl {

/// Invalid experiment or object configuration. The message carries the
/// offending field path where one exists (e.g. "controller.gamma").
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse: mismatched buffers, missing trajectory, wrong grid.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or incompatible file contents (checkpoint version/shape, CSV).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a field develops non-finite values or |f| > blowup threshold.
class NumericalBlowup : public std::runtime_error {
 public:
  NumericalBlowup(int step, const std::string& what)
      : std::runtime_error("numerical blowup at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace vpctl
