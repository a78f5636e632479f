#pragma once

#include <stdexcept>
#include <string>

namespace retrofit {

// Error taxonomy. Config/usage problems map to CLI exit code 2, data problems
// to 3, numerical failures to 4.

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidPoint : Error {
  using Error::Error;
};
struct ManifoldMismatch : Error {
  using Error::Error;
};
struct UndefinedLog : Error {
  using Error::Error;
};
struct EigFailure : Error {
  using Error::Error;
};
struct DimMismatch : Error {
  using Error::Error;
};
struct UnknownParameter : Error {
  using Error::Error;
};
struct EmptyInput : Error {
  using Error::Error;
};
struct SplitTooSmall : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

}  // namespace retrofit
