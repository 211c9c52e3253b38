#pragma once

#include <stdexcept>
#include <string>

namespace qaface {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Vector norm at or below the reject-as-zero threshold.
struct ZeroVectorError : Error {
  explicit ZeroVectorError(const std::string& msg = "vector norm below epsilon")
      : Error(msg) {}
};

struct DimensionMismatchError : Error {
  explicit DimensionMismatchError(const std::string& msg) : Error(msg) {}
};

// Fewer magnitudes than required for batch statistics.
struct BatchTooSmallError : Error {
  explicit BatchTooSmallError(const std::string& msg = "batch needs at least 2 magnitudes")
      : Error(msg) {}
};

// Magnitude normalization requested before any statistics update.
struct NotCalibratedError : Error {
  explicit NotCalibratedError(const std::string& msg = "quality stats never updated")
      : Error(msg) {}
};

struct ParseError : Error {
  int line = 0;
  int column = 0;
  ParseError(int line_, int column_, const std::string& msg)
      : Error("line " + std::to_string(line_) + ", col " + std::to_string(column_) + ": " + msg),
        line(line_),
        column(column_) {}
};

struct UnknownKeyError : Error {
  std::string key;
  explicit UnknownKeyError(const std::string& key_)
      : Error("unknown config key '" + key_ + "'"), key(key_) {}
};

struct InvalidValueError : Error {
  std::string key;
  InvalidValueError(const std::string& key_, const std::string& constraint)
      : Error("invalid value for '" + key_ + "': " + constraint), key(key_) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

struct VersionMismatchError : Error {
  explicit VersionMismatchError(const std::string& msg) : Error(msg) {}
};

struct ConfigMismatchError : Error {
  explicit ConfigMismatchError(const std::string& msg) : Error(msg) {}
};

struct CorruptFileError : Error {
  explicit CorruptFileError(const std::string& msg) : Error(msg) {}
};

}  // namespace qaface
