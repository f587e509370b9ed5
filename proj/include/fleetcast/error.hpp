#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fleetcast {

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed but violates a domain invariant (unknown ids, out-of-range parameters).
class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor or array dimensions disagree.
class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Binary or JSON artifact has a bad header, version or truncated body.
class FormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fleetcast
