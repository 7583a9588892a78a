#pragma once

#include <stdexcept>
#include <string>

namespace jldcf {

/// Base class for every contract violation raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shape contract violation. `axis()` names the offending axis
/// ("batch", "channels", "height", "width", "rank", ...).
class DimensionError : public Error {
 public:
  DimensionError(std::string axis, const std::string& what)
      : Error("dimension error [" + axis + "]: " + what), axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data error: " + what) {}
};

/// Raised by the training loop when the loss stops being finite.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("divergence: " + what) {}
};

}  // namespace jldcf
