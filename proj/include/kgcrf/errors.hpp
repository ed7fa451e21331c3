#pragma once

#include <stdexcept>
#include <string>

namespace kgcrf {

// Base of every error the engine raises. The CLI maps IoError to exit code 3
// and every other kgcrf::Error to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

// Raised by relation rasterization when the conditioning organ carries no
// mass; anatomical messages treat the pair as inactive.
class EmptyConditioningError : public Error {
 public:
  using Error::Error;
};

}  // namespace kgcrf
