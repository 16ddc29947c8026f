#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace dforge {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: 2 validation/config, 3 numeric fault, 4 i/o.
class Error : public std::runtime_error {
 public:
  Error(std::string msg, int exit_code)
      : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}

  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Bad runtime inputs (sizes, label mismatches, empty corpora, ...).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg, 2) {}
};

// Bad configuration (infeasible vocab size, unregistered language, stale
// tokenizer fingerprint, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg, 2) {}
};

// Synthetic data generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& msg) : Error(msg, 2) {}
};

// Non-finite activations or gradients.
class NumericFault : public Error {
 public:
  explicit NumericFault(const std::string& msg) : Error(msg, 3) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg, 4) {}
};

}  // namespace dforge
