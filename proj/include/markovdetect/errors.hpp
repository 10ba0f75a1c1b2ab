#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace markovdetect {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument violates a documented precondition (bad index, size mismatch, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Tuning/configuration value out of its admissible range.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `position()` is a byte offset or line number,
/// whichever the reader tracks; the message says which.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace markovdetect
