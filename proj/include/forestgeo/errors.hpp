#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace forestgeo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument (non-positive resolution, bad kernel width, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain an operation is valid on.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but carries no usable information
/// (empty trunk set, all-empty grid, no overlap, collinear points).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Text-format parse failure. `line()` is 1-based; 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class PlyError : public Error {
 public:
  enum class Kind { kMalformedHeader, kElementCountMismatch, kUnsupportedProperty };

  PlyError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Unknown or out-of-domain configuration key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(what), key_(key) {}

  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace forestgeo
