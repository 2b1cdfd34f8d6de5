// Exception types shared by every module.

#ifndef REPS_ERROR_HPP
#define REPS_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reps {

/// Violated precondition on caller-supplied values (sizes, indices, widths).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure: non-finite values, divergence, broken tape state.
class InvalidState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace reps

#endif  // REPS_ERROR_HPP
