#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace domfw {

/// Bad input to an operation: dimension mismatch, index out of range,
/// non-finite entries.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was invoked before the state it depends on exists.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A structure could not be built from the given data (e.g. disconnected graph).
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double last_gap)
      : std::runtime_error(what), last_gap_(last_gap) {}
  double last_gap() const noexcept { return last_gap_; }

 private:
  double last_gap_;
};

/// Failure inside a simulation round; carries the 1-based round index.
class RoundError : public std::runtime_error {
 public:
  RoundError(std::size_t round, const std::string& what)
      : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

}  // namespace domfw
