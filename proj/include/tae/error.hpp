#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration or argument combinations that cannot be honored
/// (empty sampling pool, chain longer than the pool, bad margins...).
class InvalidConfiguration : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DegenerateTransform : public Error {
 public:
  using Error::Error;
};

class TooSmallImage : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArchitecture : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

class InvalidCase : public Error {
 public:
  using Error::Error;
};

class FileError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data. `location` is a 1-based line number for text
/// formats and a 0-based record index for binary formats.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what), location_(location) {}

  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

}  // namespace tae
