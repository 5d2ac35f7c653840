#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nerd {

/// Precondition violated by the caller (bad dimensions, out-of-range option).
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but statistically degenerate (zero variance).
class DegenerateInput : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SingularDesign : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A NaN or infinity escaped a computation. `step` is the denoising step or
/// training epoch where it was detected.
class NumericFailure : public std::runtime_error {
public:
  NumericFailure(const std::string& what, long step)
      : std::runtime_error(what + " (at step " + std::to_string(step) + ")"), step_(step) {}
  long step() const noexcept { return step_; }

private:
  long step_;
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class VersionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace nerd
