#pragma once

#include <stdexcept>
#include <string>

namespace cargopatch {

// Base type for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A precondition or API contract was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// File or directory access failed.
struct IoError : Error {
  using Error::Error;
};

// A file did not conform to its schema. `field` holds the offending path.
struct ParseError : Error {
  std::string field;
  ParseError(const std::string& field_path, const std::string& what)
      : Error(what), field(field_path) {}
};

// A loaded or constructed object violates a domain invariant.
struct ValidationError : Error {
  std::string code;
  ValidationError(const std::string& violation_code, const std::string& what)
      : Error(what), code(violation_code) {}
};

// Rejection sampling could not produce a scene within the attempt budget.
struct GenerationError : Error {
  using Error::Error;
};

// No valid patch placement exists, or a quad escapes its host surface.
struct PlacementError : Error {
  using Error::Error;
};

// The optimization loop could not make progress.
struct OptimizationError : Error {
  using Error::Error;
};

// Bad run configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace cargopatch
