#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfc {

/// Invalid user input or configuration (bad bounds, CFL violation, unknown key, ...).
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A point was evaluated outside the domain where the model is defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Integration left the configured state-norm bound.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double time)
      : std::runtime_error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A descent step increased the cost beyond the admissible roundoff slack.
class MonotonicityViolation : public std::runtime_error {
 public:
  MonotonicityViolation(const std::string& what, std::size_t iteration, double before, double after)
      : std::runtime_error(what), iteration_(iteration), before_(before), after_(after) {}

  std::size_t iteration() const noexcept { return iteration_; }
  double before() const noexcept { return before_; }
  double after() const noexcept { return after_; }

 private:
  std::size_t iteration_;
  double before_;
  double after_;
};

}  // namespace mfc
