#pragma once

#include <stdexcept>
#include <string>

namespace iog {

/// Bad user input or configuration: a field out of range, a violated precondition.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor dimensions do not line up.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An id outside of its vocabulary or table.
class IndexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input. Carries the line (or byte offset) where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : std::runtime_error(what + " (at " + std::to_string(location) + ")"), location_(location) {}
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

/// Stored bytes disagree with their recorded fingerprint or size.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file written by a different format version or for a different model shape.
class IncompatibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace iog
