#pragma once

#include <stdexcept>
#include <string>

namespace avglemma {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A requested derivative order exceeds what a field or phase provides.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A checked hypothesis of an estimate does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The derivative non-degeneracy condition fails on the compact set.
class NonDegeneracyError : public Error {
 public:
  using Error::Error;
};

/// The velocity spectrum of a field is not resolved by its grid.
class AliasingError : public Error {
 public:
  using Error::Error;
};

/// A test function is not supported inside the declared velocity box.
class SupportError : public Error {
 public:
  using Error::Error;
};

/// The operation is not defined for the given input (e.g. zero force).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Invalid scenario configuration; `path` is a JSON pointer to the field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace avglemma
